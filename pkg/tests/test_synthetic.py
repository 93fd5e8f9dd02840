"""Seeded random model generators used by the verification sweeps."""

from lpvembed.expr import to_string
from lpvembed.factorize import factorize
from lpvembed.synthetic import (
    corpus_models, mixed_model, poly_trig_model, random_model, rational_model,
)


def test_generators_are_deterministic():
    for make in (poly_trig_model, mixed_model, rational_model):
        a, b = make(17), make(17)
        assert (a.nx, a.nu, a.ny) == (b.nx, b.nu, b.ny)
        assert [to_string(e) for e in a.f] == [to_string(e) for e in b.f]
        assert [to_string(e) for e in a.h] == [to_string(e) for e in b.h]
    assert to_string(random_model(5).f[0]) == to_string(random_model(5).f[0])


def test_generators_vary_with_seed():
    texts = {tuple(to_string(e) for e in random_model(s).f) for s in range(12)}
    assert len(texts) >= 10


def test_dimensions_in_range():
    for seed in range(30):
        m = random_model(seed)
        assert 1 <= m.nx <= 4 and 1 <= m.nu <= 4 and 1 <= m.ny <= 2
        assert m.sample_time == 0.0


def test_poly_trig_family_is_closed_form():
    # this family must never fall back to quadrature
    for seed in (101, 7, 23):
        fs = factorize(poly_trig_model(seed))
        assert fs.warnings == ()


def test_mixed_family_exercises_fallback():
    assert any(factorize(mixed_model(s)).warnings for s in range(6))


def test_corpus_models_fixed():
    models = corpus_models()
    assert len(models) == 3
    assert [m.name for m in models] == [
        "synthetic_poly_trig_101", "synthetic_mixed_202",
        "synthetic_rational_303"]
