import logging
from concurrent.futures import ThreadPoolExecutor

# Initialize shared objects
logger = logging.getLogger('meanjump')


def configure_logging(level='INFO'):
    """Attach a stderr handler to the package logger (idempotent)."""
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s [%(module)s] %(message)s'))
        logger.addHandler(handler)
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    return logger


def replica_map(func, items, workers=1):
    """
    Apply func to every item, optionally on a thread pool.

    Results come back in input order, so aggregation does not depend on
    the thread schedule.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
