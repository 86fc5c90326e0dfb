"""Layered settings."""

from minilib.parser import parse_text

DEFAULTS = {"name": "minilib", "level": "info"}


class Settings:
    """Defaults overlaid with parsed text."""

    def __init__(self, text=""):
        self.values = dict(DEFAULTS)
        self.values.update(parse_text(text))

    def get(self, key):
        return self.values.get(key)

    def as_lines(self):
        lines = []
        for key in sorted(self.values):
            lines.append(key + "=" + self.values[key])
        return lines
