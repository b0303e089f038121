from gramlm.rng import SplitMix64


def test_determinism():
    a = SplitMix64(42)
    b = SplitMix64(42)
    assert [a.u64() for _ in range(10)] == [b.u64() for _ in range(10)]


def test_seeds_differ():
    assert SplitMix64(1).u64() != SplitMix64(2).u64()


def test_u64_range():
    rng = SplitMix64(9)
    for _ in range(1000):
        v = rng.u64()
        assert 0 <= v < 2**64


def test_random_unit_interval():
    rng = SplitMix64(5)
    xs = [rng.random() for _ in range(5000)]
    assert all(0.0 <= x < 1.0 for x in xs)
    mean = sum(xs) / len(xs)
    assert abs(mean - 0.5) < 0.02


def test_uniform_open_never_zero():
    rng = SplitMix64(5)
    assert all(0.0 < rng.uniform_open() < 1.0 for _ in range(5000))


def test_derive_gives_independent_streams():
    root = SplitMix64(100)
    s1 = root.derive(1)
    s2 = root.derive(2)
    s1b = SplitMix64(100).derive(1)
    assert [s1.u64() for _ in range(5)] == [s1b.u64() for _ in range(5)]
    assert SplitMix64(100).derive(2).u64() == s2.u64()
    assert s1b.u64() != s2.u64()  # distinct indexes decorrelate


def test_derive_does_not_disturb_parent():
    a = SplitMix64(7)
    b = SplitMix64(7)
    a.derive(3)
    assert a.u64() == b.u64()
