"""Text helpers."""

import re

_NON_WORD = re.compile(r"[^a-z0-9]+")


def slugify(text):
    """Lowercase text and join its words with dashes."""
    lowered = text.strip().lower()
    return _NON_WORD.sub("-", lowered).strip("-")


def title_case(text):
    """Capitalize every word."""
    words = text.split()
    return " ".join(w[:1].upper() + w[1:] for w in words)


def truncate(text, width, marker="..."):
    """Shorten text to at most width characters."""
    if len(text) <= width:
        return text
    keep = max(0, width - len(marker))
    return text[:keep] + marker


def word_count(text):
    """Number of whitespace-separated words."""
    count = 0
    for _ in text.split():
        count += 1
    return count
