import math
import os.path
from collections import Counter
from functools import reduce

VERSION = "1.0"


def clamp(value, low, high):
    """Clamp value into the closed interval [low, high]."""
    if value < low:
        return low
    if value > high:
        return high
    return value


def circle_area(radius):
    """Return the area of a circle with the given radius."""
    return math.pi * radius ** 2


def word_histogram(text):
    """Count how often each whitespace-separated word occurs in text."""
    return Counter(text.split())


def file_stem(path):
    """Return the file name of path without directory or extension."""
    base = os.path.basename(path)
    stem, _ext = os.path.splitext(base)
    return stem


def sign(x):
    """Return -1, 0 or 1 according to the sign of x."""
    result = 0
    if x != 0:
        if x > 0:
            result = 1
        else:
            return -1
    return result


def gcd_list(numbers):
    """Greatest common divisor of a non-empty list of integers."""
    return reduce(math.gcd, numbers)


def log_message(msg):
    """Print a message prefixed with a marker."""
    print(">> " + msg)


def reset_list(items):
    """Empty the given list in place."""
    if not items:
        return
    items.clear()


def no_docstring(x):
    return x * 2


def single_quoted(x):
    '''Single-quoted docstrings are not matched.'''
    return x + 1


@staticmethod
def decorated(x):
    """Decorated definitions are not direct module children."""
    return x


class Accumulator:
    """A running sum."""

    def add(self, x):
        """Methods are not seeds."""
        self.total = getattr(self, "total", 0) + x
        return self.total


def outer(x):
    def inner(y):
        """Nested functions are not seeds."""
        return y + 1

    return inner(x)
