import json

import numpy as np
import pytest

from ncsim import scenarios
from ncsim.channel import (
    ConstantDelay,
    CorrelatedDelay,
    DiscreteUniform,
    LossModel,
    SymmetricDelay,
    UncorrelatedDelay,
    Uniform,
)
from ncsim.errors import ValidationError
from ncsim.strategies import CompensationStrategy, FixedGain, GainBucket, ScheduledGain


def _errors(excinfo):
    return excinfo.value.violations


def test_catalog_has_every_case_in_order():
    assert list(scenarios.CATALOG) == ["0a", "0b"] + [str(i) for i in range(1, 24)]


@pytest.mark.parametrize("case_id", list(scenarios.CATALOG))
def test_defaults_validate(case_id):
    spec = scenarios.scenario_from_case(case_id)
    assert scenarios.validate(spec) == []
    assert spec.case_id == case_id


@pytest.mark.parametrize("raw, key", [("0A", "0a"), (" 7 ", "7"), (12, "12")])
def test_case_id_normalization(raw, key):
    assert scenarios.normalize_case_id(raw) == key


def test_unknown_case_rejected():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("24")
    assert _errors(exc)[0].startswith("case_id:")


def test_case_families():
    cat = scenarios.CATALOG
    assert cat["0a"].family == scenarios.DELAY_FREE
    assert {cat[c].family for c in ("0b", "1", "2", "3")} == {scenarios.SHORT}
    assert cat["4"].family == scenarios.LONG
    assert all(cat[str(i)].family == scenarios.COMPENSATED for i in range(5, 24))
    assert [cat[str(i)].strategy for i in range(5, 14)] == ["zero", "previous", "estimate"] * 3
    assert all(cat[str(i)].lossy == ("sc",) for i in range(5, 14))
    assert all(cat[str(i)].lossy == ("ca",) for i in range(14, 23))
    assert cat["23"].lossy == ("sc", "ca")


def test_sc_loss_case_rejects_ca_loss():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("5", overrides={"loss": LossModel(0.2, 0.1)})
    assert "loss.p_ca: cases 5-13 require lossless CA link" in _errors(exc)


def test_ca_loss_case_rejects_sc_loss():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("15", overrides={"loss": LossModel(0.1, 0.2)})
    assert "loss.p_sc: cases 14-22 require lossless SC link" in _errors(exc)


def test_delay_kind_must_match():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("1", overrides={"delay": UncorrelatedDelay(Uniform(0, 0.01),
                                                                                Uniform(0, 0.01))})
    assert any(e.startswith("delay.kind:") for e in _errors(exc))


def test_short_delay_case_rejects_long_support():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("1", overrides={"delay": SymmetricDelay(Uniform(0, 0.06))})
    assert any(e.startswith("delay: short-delay cases") for e in _errors(exc))


def test_long_delay_case_rejects_short_support():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("4", overrides={"delay": ConstantDelay(0.05)})
    assert any(e.startswith("delay: case 4") for e in _errors(exc))


def test_strategy_must_match_case():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("6", overrides={"strategy_sc": CompensationStrategy.zero()})
    assert any(e.startswith("strategy_sc.kind:") for e in _errors(exc))


def test_delay_free_case_requires_zero_delay():
    with pytest.raises(ValidationError):
        scenarios.scenario_from_case("0a", overrides={"delay": ConstantDelay(0.01)})
    with pytest.raises(ValidationError):
        scenarios.scenario_from_case("0b", overrides={"delay": ConstantDelay(0.0)})


def test_case_id_cannot_be_overridden():
    with pytest.raises(ValidationError):
        scenarios.scenario_from_case("1", overrides={"case_id": "2"})
    with pytest.raises(ValidationError):
        scenarios.scenario_from_case("1", overrides={"bogus": 1})


def test_gain_shape_checked():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("1", overrides={"gain": FixedGain([[1.0]])})
    assert any(e.startswith("gain.l:") for e in _errors(exc))


def test_multiple_violations_reported_together():
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("5", overrides={"loss": LossModel(0.2, 0.1), "x0": [1.0, 2.0, 3.0]})
    assert len(_errors(exc)) == 2


def test_schedule_must_cover_controller_view():
    short = ScheduledGain((GainBucket(0.0, 0.02, [[1.0, 1.0]]),))
    with pytest.raises(ValidationError) as exc:
        scenarios.scenario_from_case("1", overrides={"gain": short})
    assert any(e.startswith("gain.buckets:") for e in _errors(exc))
    cover = ScheduledGain((GainBucket(0.0, 0.03, [[1.0, 1.0]]), GainBucket(0.03, 0.05, [[0.5, 0.5]])))
    scenarios.scenario_from_case("1", overrides={"gain": cover})


def test_controller_delay_views():
    from ncsim.channel import DelaySample
    sym = scenarios.scenario_from_case("1")
    assert sym.controller_delay(DelaySample(0.01, 0.01, 0.02)) == 0.02
    cor = scenarios.scenario_from_case("2", overrides={"delay": CorrelatedDelay(Uniform(0, 0.02), 2)})
    # tau_sc = 2 tau_ca, so the controller recovers tau_ca = tau_sc / 2
    assert cor.controller_delay(DelaySample(0.02, 0.01, 0.03)) == pytest.approx(0.03)
    unc = scenarios.scenario_from_case("3")
    assert unc.controller_delay(DelaySample(0.01, 0.02, 0.03)) == pytest.approx(0.01 + 0.0125)
    unc2 = scenarios.scenario_from_case("3", overrides={"assumed_tau_ca": 0.0})
    assert unc2.controller_delay(DelaySample(0.01, 0.02, 0.03)) == 0.01


# -- file format ---------------------------------------------------------------


def _round_trip(spec):
    return scenarios.loads(scenarios.dumps(spec))


@pytest.mark.parametrize("case_id", list(scenarios.CATALOG))
def test_round_trip_defaults(case_id):
    spec = scenarios.scenario_from_case(case_id)
    assert scenarios.to_dict(_round_trip(spec)) == scenarios.to_dict(spec)


@pytest.mark.parametrize("overrides", [
    {"delay": CorrelatedDelay(DiscreteUniform((0.0, 0.01)), "1/3")},
    {"gain": ScheduledGain((GainBucket(0.0, 0.02, [[1.0, 1.5]]), GainBucket(0.02, 0.1, [[0.5, 0.7]])))},
    {"strategy_sc": CompensationStrategy.estimate(0.2, 0.7, True), "assumed_tau_ca": 0.01},
])
def test_round_trip_variants(overrides):
    case = "7" if "strategy_sc" in overrides else "2"
    spec = scenarios.scenario_from_case(case, overrides=overrides)
    assert scenarios.to_dict(_round_trip(spec)) == scenarios.to_dict(spec)


def test_save_and_load(tmp_path):
    spec = scenarios.scenario_from_case("9")
    path = tmp_path / "s.json"
    scenarios.save(spec, path)
    assert scenarios.to_dict(scenarios.load(path)) == scenarios.to_dict(spec)


def test_load_missing_file_names_path(tmp_path):
    path = tmp_path / "nope.json"
    with pytest.raises(ValidationError) as exc:
        scenarios.load(path)
    assert str(path) in str(exc.value)


def _doc(case="5"):
    return scenarios.to_dict(scenarios.scenario_from_case(case))


def test_unknown_key_rejected():
    doc = _doc()
    doc["delay"]["extra"] = 1
    with pytest.raises(ValidationError) as exc:
        scenarios.from_dict(doc)
    assert "delay.extra: unknown key" in _errors(exc)


def test_missing_key_rejected():
    doc = _doc()
    del doc["loss"]["p_ca"]
    with pytest.raises(ValidationError) as exc:
        scenarios.from_dict(doc)
    assert "loss.p_ca: missing" in _errors(exc)


def test_type_errors_name_the_field():
    doc = _doc()
    doc["h"] = "fast"
    doc["plant"]["a"] = [[0.0, 1.0], [0.0]]
    doc["strategy_sc"]["init_from_state"] = "yes"
    with pytest.raises(ValidationError) as exc:
        scenarios.from_dict(doc)
    fields = {e.split(":")[0] for e in _errors(exc)}
    assert {"h", "plant.a", "strategy_sc.init_from_state"} <= fields


def test_structural_violation_from_file():
    doc = _doc()
    doc["loss"]["p_ca"] = 0.3
    with pytest.raises(ValidationError) as exc:
        scenarios.from_dict(doc)
    assert "loss.p_ca: cases 5-13 require lossless CA link" in _errors(exc)


def test_invalid_json():
    with pytest.raises(ValidationError):
        scenarios.loads("{not json")


def test_bad_values_inside_components():
    doc = _doc()
    doc["delay"] = {"kind": "symmetric", "dist": {"kind": "uniform", "lo": 0.5, "hi": 0.1}}
    with pytest.raises(ValidationError) as exc:
        scenarios.from_dict(doc)
    assert any(e.startswith("delay.dist:") for e in _errors(exc))


def test_document_without_optional_fields():
    doc = _doc("1")
    del doc["plant"]["d"]
    del doc["assumed_tau_ca"]
    del doc["strategy_sc"]["alpha"]
    spec = scenarios.from_dict(json.loads(json.dumps(doc)))
    assert np.array_equal(spec.plant.d, np.zeros((2, 1)))
