import numpy as np
import pytest

from catalytic.measurement import ObserverRegister, OutcomeDistribution, born, project
from catalytic.prediction import (
    ABSTAINED,
    AGREEMENT,
    CATALYTIC_REASON,
    CONTRADICTION,
    DEVIATION,
    KnowledgeError,
    KnowledgeModel,
    Prediction,
    PredictionTarget,
    assess,
    catalytic_interval_check,
    is_catalytic,
    predict_q,
    predict_q_star,
    validate,
)
from catalytic.scenarios import (
    CatalyticPremeasure,
    Premeasure,
    Prepare,
    cat_protocol,
    dog_protocol,
    pet_protocol,
    run_protocol,
)
from catalytic.statevec import Basis, make_product_state

R2 = 1 / np.sqrt(2)


def after_seeing_up(p):
    """A has seen the spin up: spin up, A in its first record, B ready."""
    return make_product_state(p.layout, [[1, 0], [1, 0], [1, 0]])


def test_dog_naive_contradiction():
    a = assess(dog_protocol(), "A", naive=True)
    assert a.prediction.certain_outcome == "up"
    assert a.report.status == CONTRADICTION
    assert abs(a.report.tv_distance - 0.5) < 1e-12
    assert abs(a.report.actual_probability - 0.5) < 1e-12


def test_dog_q_star_abstains():
    a = assess(dog_protocol(), "A")
    assert not a.prediction.valid and a.prediction.distribution is None
    assert a.prediction.invalid_reason == CATALYTIC_REASON == "catalytic measurement on agent in interval"
    assert a.report.status == ABSTAINED and a.report.reason == CATALYTIC_REASON


def test_pet_prediction_matches_simulation():
    p = pet_protocol()
    z, x = p.bases["z"], p.bases["x"]
    b_measures = [s for s in p.steps if isinstance(s, Premeasure) and s.target == "spin" and s.basis is x]
    k = KnowledgeModel("A", after_seeing_up(p), tuple(b_measures), PredictionTarget("spin", z),
                       p.bases["rec"])
    pred = predict_q(k)
    assert pred.certain_outcome is None
    assert abs(pred.distribution["up"] - 0.5) < 1e-12 and abs(pred.distribution["down"] - 0.5) < 1e-12
    # simulation: full Pet run, in the branch where A recorded up
    _, post = project(run_protocol(p).final, "A", p.bases["rec"], "U")
    sim = born(post, "spin", z)
    assert pred.distribution.tv_distance(sim) < 1e-12
    assert catalytic_interval_check(k, p.steps)
    assert predict_q_star(k, p.steps).distribution.tv_distance(sim) < 1e-12


def test_pet_and_cat_assessments():
    assert assess(pet_protocol(), "A").report.status == AGREEMENT
    assert assess(pet_protocol(), "A", naive=True).report.status == AGREEMENT
    assert assess(cat_protocol(), "A").report.status == ABSTAINED


def test_is_catalytic_uses_record_basis():
    p = cat_protocol()
    cat_step = next(s for s in p.steps if isinstance(s, CatalyticPremeasure))
    rec = p.bases["rec"]
    assert is_catalytic(cat_step, "A", rec)
    assert not is_catalytic(cat_step, "B", rec)
    diag = CatalyticPremeasure("A", rec, cat_step.register)
    assert not is_catalytic(diag, "A", rec)
    assert is_catalytic(diag, "A", None)
    # tiny tilt stays under the tolerance, a real tilt does not
    for eps, want in ((1e-5, False), (1e-2, True)):
        c, s = np.cos(eps), np.sin(eps)
        tilted = Basis("t", "A", ("a", "b"), [[c, s], [-s, c]])
        assert is_catalytic(CatalyticPremeasure("A", tilted, cat_step.register), "A", rec) is want


def test_premeasure_of_agent_is_not_flagged():
    p = cat_protocol()
    rec, cat = p.bases["rec"], p.bases["cat"]
    reg = ObserverRegister.standard(p.bases["yn"])
    assert not is_catalytic(Premeasure("A", cat, reg), "A", rec)


def test_validate_statuses():
    t = PredictionTarget("s", Basis.computational("s", ["a", "b"]))
    even = OutcomeDistribution({"a": 0.5, "b": 0.5})
    sure = OutcomeDistribution({"a": 1.0, "b": 0.0})
    assert validate(Prediction(t, even, None), even).status == AGREEMENT
    r = validate(Prediction(t, even, None), sure)
    assert r.status == DEVIATION and r.tv_distance == pytest.approx(0.5)
    assert validate(Prediction(t, sure, "a"), sure).status == AGREEMENT
    r = validate(Prediction(t, sure, "a"), even)
    assert r.status == CONTRADICTION and r.actual_probability == pytest.approx(0.5)
    with pytest.raises(KnowledgeError):
        validate(Prediction(t, even, None), OutcomeDistribution({"x": 1.0}))


def test_knowledge_model_checks():
    p = cat_protocol()
    s = after_seeing_up(p)
    t = PredictionTarget("spin", p.bases["z"])
    with pytest.raises(KnowledgeError):
        KnowledgeModel("Q", s, (), t)
    with pytest.raises(KnowledgeError):
        KnowledgeModel("A", s, (), None)
    with pytest.raises(KnowledgeError):
        KnowledgeModel("A", s, (Prepare("spin", (1, 0)),), t)


def test_q_star_equals_q_when_valid(rng):
    from gen import random_protocol
    from catalytic.prediction import knowledge_from_protocol
    for _ in range(40):
        p = random_protocol(rng, spare="s0")
        k = knowledge_from_protocol(p, "s0", rng_seed=3)
        a, b = predict_q(k), predict_q_star(k, k.known_future_steps)
        assert b.valid and a == b


def test_empty_interval_and_eigenstate():
    p = cat_protocol()
    k = KnowledgeModel("A", after_seeing_up(p), (), PredictionTarget("spin", p.bases["z"]), p.bases["rec"])
    assert catalytic_interval_check(k, [])
    for pred in (predict_q(k), predict_q_star(k, [])):
        assert pred.valid and pred.certain_outcome == "up"
    sure = pred.distribution
    assert validate(pred, sure).tv_distance == 0


@pytest.mark.parametrize("build", [cat_protocol, dog_protocol])
def test_catalytic_step_lists_fail_the_check(build):
    p = build()
    k = KnowledgeModel("A", after_seeing_up(p), (), PredictionTarget("spin", p.bases["z"]), p.bases["rec"])
    assert not catalytic_interval_check(k, p.steps)


def test_dog_q_prediction_is_certain_up():
    p = dog_protocol()
    cat_step = next(s for s in p.steps if isinstance(s, CatalyticPremeasure))
    k = KnowledgeModel("A", after_seeing_up(p), (cat_step,), PredictionTarget("spin", p.bases["z"]), p.bases["rec"])
    pred = predict_q(k)
    assert pred.valid and pred.certain_outcome == "up"
    assert predict_q_star(k, (cat_step,)).valid is False


# Dog's prepared state is A's deduction; only A holds that belief, so only A
# reasons from a state consistent with what actually happened.
@pytest.mark.parametrize("build,agent", [
    (cat_protocol, "A"), (cat_protocol, "B"), (pet_protocol, "A"), (pet_protocol, "B"), (dog_protocol, "A"),
])
def test_q_star_never_contradicts_on_builtins(build, agent):
    assert assess(build(), agent).report.status != CONTRADICTION
