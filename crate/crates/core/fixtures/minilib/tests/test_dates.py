from minilib.dates import days_in_month, is_leap, week_number


def test_leap():
    assert is_leap(2024)
    assert not is_leap(2023)


def test_leap_century():
    assert is_leap(2000)
    assert not is_leap(1900)


def test_february():
    assert days_in_month(2024, 2) == 29


def test_week_number():
    assert week_number(1) == 1
