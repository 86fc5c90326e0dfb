"""Parsing of simple key=value configuration text."""

from minilib.textutil import slugify

COMMENT = "#"


def parse_line(line):
    """Split one key=value line; blank lines and comments give None."""
    line = line.strip()
    if not line or line.startswith(COMMENT):
        return None
    if line.find("=") < 0:
        raise ValueError("missing '=' in " + repr(line))
    key, value = line.split("=", 1)
    return key.strip(), value.strip()


def parse_text(text):
    """Parse every line of text into a dict."""
    result = {}
    for raw in text.splitlines():
        pair = parse_line(raw)
        if pair is not None:
            result[pair[0]] = pair[1]
    return result


def normalized_keys(mapping):
    """Slugified copies of the keys of mapping."""
    out = {slugify(k): v for k, v in mapping.items()}
    return out
