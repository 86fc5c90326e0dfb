from minilib.ops import ops_00, ops_01


def test_bounded():
    assert ops_00.bounded_00(5) == 5


def test_label():
    assert ops_01.label_01("A B") == "a-b-01"


def test_pairs():
    assert ops_00.pairs_00([1, 2, 3]) == [(1, 2), (2, 3)]
