import random

from segstore.bloom import BloomFilter


def test_no_false_negatives():
    rng = random.Random(5)
    keys = [rng.randrange(2 ** 40) for _ in range(5000)]
    bloom = BloomFilter.sized_for(len(set(keys)))
    for k in keys:
        bloom.add(k)
    assert all(bloom.might_contain(k) for k in keys)


def test_false_positive_rate_at_design_load():
    rng = random.Random(6)
    present = set(rng.randrange(2 ** 40) for _ in range(4000))
    bloom = BloomFilter.sized_for(len(present))
    for k in present:
        bloom.add(k)
    probes = 20_000
    fp = sum(1 for _ in range(probes)
             if bloom.might_contain(rng.randrange(2 ** 40, 2 ** 41)))
    assert fp / probes < 0.05


def test_serialization_round_trip():
    bloom = BloomFilter.sized_for(100)
    for k in range(100):
        bloom.add(k * 7)
    data = bloom.to_bytes()
    back = BloomFilter.from_bytes(data)
    assert back.nbits == bloom.nbits
    assert back.bits == bloom.bits
    assert all(back.might_contain(k * 7) for k in range(100))


def test_empty_filter_rejects():
    bloom = BloomFilter.sized_for(10)
    assert not any(bloom.might_contain(k) for k in range(100))
