"""
Helper utilities for the pump scheduler.
"""
import json
import logging
import os
import tempfile

import numpy as np

logger = logging.getLogger(__name__)


def format_currency(amount, currency='GBP'):
    """Format a currency amount.

    Args:
        amount (float): The amount to format.
        currency (str, optional): Currency code. Defaults to 'GBP'.

    Returns:
        str: The formatted amount.
    """
    if amount is None:
        return f'0.00 {currency}'

    return '{:,.2f} {}'.format(float(amount), currency)


def format_percent(value):
    """Format a percentage with two decimals.

    Args:
        value (float): The percentage, already scaled to 0-100.

    Returns:
        str: The formatted value, or 'n/a' for a missing value.
    """
    if value is None:
        return 'n/a'
    return '{:.2f}%'.format(float(value))


def log_error(message, error=None):
    """Log an error message.

    Args:
        message (str): The error message.
        error (Exception, optional): The exception. Defaults to None.
    """
    if error:
        logger.error(f"{message}: {str(error)}", exc_info=True)
    else:
        logger.error(message)


def _default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json(data, indent=2):
    """Convert data, numpy values included, to a JSON string."""
    return json.dumps(data, indent=indent, default=_default)


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    return path


def write_json(path, data):
    return atomic_write_text(path, to_json(data))


def write_csv(path, frame):
    """Write a pandas DataFrame atomically, without the index."""
    return atomic_write_text(path, frame.to_csv(index=False))
