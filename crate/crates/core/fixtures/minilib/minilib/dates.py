"""Calendar helpers."""


def is_leap(year):
    """Gregorian leap-year rule."""
    if year % 400 == 0:
        return True
    if year % 100 == 0:
        return False
    return year % 4 == 0


def days_in_month(year, month):
    """Number of days in the given month."""
    if month == 2:
        return 29 if is_leap(year) else 28
    if month in (4, 6, 9, 11):
        return 30
    return 31


def week_number(day_of_year):
    """1-based week of the year for a 1-based day number."""
    weeks = day_of_year // 7
    return weeks
