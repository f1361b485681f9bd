import dataclasses
import math

import numpy as np
import pytest

from oracles import two_pass_mean_std
from tactile_explore.baselines import NotGoBackPolicy, RandomWalkPolicy
from tactile_explore.discriminator import Prediction
from tactile_explore.env import EnvConfig
from tactile_explore.errors import InvalidParameterError
from tactile_explore.harness import (
    TRIAL_COLUMNS,
    CSVWriter,
    TrialRecord,
    aggregate,
    config_hash,
    evaluate,
    noise_sweep,
    read_csv,
    records_from_csv,
    run_trial,
    threshold_sweep,
    trial_schedule,
    write_trials_csv,
)
from tactile_explore.icp import ICPDiscriminator


class ConstantDiscriminator:
    """Always returns the same distribution."""

    confidence_threshold = 0.98

    def __init__(self, dist):
        self.pred = Prediction.from_distribution(dist)

    def predict_grid(self, grid):
        return self.pred


class ExploredCountDiscriminator:
    """Turns fully confident in object 0 once ``n`` cells have been explored."""

    confidence_threshold = 0.98

    def __init__(self, n, k=4):
        self.n, self.k = n, k

    def predict_grid(self, grid):
        d = np.full(self.k, 1.0 / self.k)
        if grid.explored_count >= self.n:
            d = np.eye(self.k)[0]
        return Prediction.from_distribution(d)


ENV = EnvConfig(max_actions=300, sensor_failure_rate=0.005)


class TestRunTrial:
    def test_confident_before_first_action(self, objects):
        rec = run_trial(RandomWalkPolicy(), ConstantDiscriminator([1.0] + [0.0] * 9), ENV, objects, 0, seed=1)
        assert rec.actions == 0 and rec.explored == 0
        assert rec.termination == "confidence" and rec.correct
        assert math.isnan(rec.ear)

    def test_threshold_one_runs_to_the_cap(self, objects):
        rec = run_trial(RandomWalkPolicy(), ConstantDiscriminator([1.0] + [0.0] * 9), ENV, objects, 3, seed=1,
                        threshold=1.0)
        assert rec.actions == ENV.max_actions
        assert rec.termination == "timeout" and rec.predicted == 0 and not rec.correct

    def test_stops_as_soon_as_confident(self, objects):
        rec = run_trial(NotGoBackPolicy(), ExploredCountDiscriminator(25, 10), ENV, objects, 0, seed=2)
        assert rec.explored == 25 and rec.termination == "confidence"

    def test_record_fields(self, objects):
        rec, grid = run_trial(RandomWalkPolicy(), ExploredCountDiscriminator(10**6, 10), ENV, objects, 4, seed=5,
                              trial=7, return_grid=True)
        assert rec.trial == 7 and rec.object_id == 4 and rec.seed == 5
        assert rec.explored == grid.explored_count
        assert abs(rec.tx_m) <= 0.01 and abs(rec.ty_m) <= 0.01

    def test_same_seed_same_trial(self, objects):
        disc = ICPDiscriminator(objects)
        pol = NotGoBackPolicy()
        assert run_trial(pol, disc, ENV, objects, 2, 11) == run_trial(pol, disc, ENV, objects, 2, 11)

    def test_correct_flag_must_agree(self):
        with pytest.raises(ValueError):
            TrialRecord(0, 1, 0.0, 0.0, 0.0, 0, 1, 1, 2, True, "confidence")


class TestInvariants:
    @pytest.mark.parametrize("policy", [RandomWalkPolicy(), NotGoBackPolicy()], ids=["rw", "ngb"])
    def test_explored_at_most_actions(self, objects, policy):
        _, recs = evaluate(policy, ExploredCountDiscriminator(60, 10), ENV, objects, 40, seed=3)
        for r in recs:
            assert r.explored <= r.actions
            assert 0.0 < r.ear <= 1.0


class TestSchedule:
    def test_round_robin_and_distinct_seeds(self):
        sch = trial_schedule(0, 25, 10)
        assert [o for _, o, _ in sch] == [i % 10 for i in range(25)]
        assert len({s for _, _, s in sch}) == 25
        assert sch == trial_schedule(0, 25, 10)
        assert sch != trial_schedule(1, 25, 10)

    def test_zero_trials(self, objects):
        with pytest.raises(InvalidParameterError):
            trial_schedule(0, 0, 10)
        with pytest.raises(InvalidParameterError):
            evaluate(RandomWalkPolicy(), ConstantDiscriminator([1.0]), ENV, objects, 0, seed=0)


class TestAggregate:
    def test_against_two_pass_oracle(self, objects, tmp_path):
        _, recs = evaluate(RandomWalkPolicy(), ExploredCountDiscriminator(40, 10), ENV, objects, 30, seed=4)
        path = tmp_path / "t.csv"
        write_trials_csv(path, recs, "abc")
        back = records_from_csv(path)
        assert back == recs
        m = aggregate(back)
        acts = [r.actions for r in back]
        expl = [r.explored for r in back]
        ears = [r.explored / r.actions for r in back if r.actions]
        for (mean, std), (gm, gs) in [(two_pass_mean_std(acts), (m.actions_mean, m.actions_std)),
                                      (two_pass_mean_std(expl), (m.explored_mean, m.explored_std)),
                                      (two_pass_mean_std(ears), (m.ear_mean, m.ear_std))]:
            assert gm == pytest.approx(mean, rel=1e-12)
            assert gs == pytest.approx(std, rel=1e-9, abs=1e-12)
        assert m.success_rate == sum(r.correct for r in back) / len(back)
        assert m.trials == 30

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            aggregate([])

    def test_zero_action_trials_are_left_out_of_ear(self):
        recs = [TrialRecord(0, 0, 0.0, 0.0, 0.0, 0, 0, 0, 0, True, "confidence"),
                TrialRecord(1, 0, 0.0, 0.0, 0.0, 0, 4, 2, 0, True, "confidence")]
        m = aggregate(recs)
        assert m.ear_mean == 0.5 and m.actions_mean == 2.0


class TestDeterminism:
    def test_serial_and_parallel_agree(self, objects, tmp_path):
        disc = ICPDiscriminator(objects)
        pol = NotGoBackPolicy()
        a = evaluate(pol, disc, ENV, objects, 12, seed=8)
        b = evaluate(pol, disc, ENV, objects, 12, seed=8, workers=2)
        assert a == b
        write_trials_csv(tmp_path / "a.csv", a[1], "x")
        write_trials_csv(tmp_path / "b.csv", b[1], "x")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestNoiseSweep:
    def test_rate_zero_matches_plain_evaluation(self, objects):
        disc = ICPDiscriminator(objects)
        clean = dataclasses.replace(ENV, sensor_failure_rate=0.0)
        (rate, m), = noise_sweep(NotGoBackPolicy(), disc, ENV, objects, [0.0], 10, seed=2)
        assert rate == 0.0
        assert m == evaluate(NotGoBackPolicy(), disc, clean, objects, 10, seed=2)[0]

    def test_bad_rate(self, objects):
        with pytest.raises(InvalidParameterError):
            noise_sweep(RandomWalkPolicy(), ConstantDiscriminator([1.0]), ENV, objects, [1.5], 1, seed=0)


class TestThresholdSweep:
    def test_calls_in_order(self):
        seen = []
        out = threshold_sweep([0.7, 0.98], lambda t: seen.append(t) or t, lambda tr, t: (tr, t))
        assert seen == [0.7, 0.98] and out == [(0.7, (0.7, 0.7)), (0.98, (0.98, 0.98))]

    def test_bad_threshold(self):
        with pytest.raises(InvalidParameterError):
            threshold_sweep([0.0], lambda t: t, lambda tr, t: t)


class TestCSV:
    def test_header_and_rows(self, tmp_path):
        p = tmp_path / "m.csv"
        with CSVWriter(p, ("a", "b", "c"), "d1g") as w:
            w.write_row([1, 0.1, True])
            w.write_row({"a": 2, "b": float("nan"), "c": False})
        comment, rows = read_csv(p)
        assert "config_sha256=d1g" in comment and "format_version=1" in comment
        assert rows == [{"a": "1", "b": "0.1", "c": "1"}, {"a": "2", "b": "nan", "c": "0"}]

    def test_every_row_is_complete_after_each_write(self, tmp_path):
        p = tmp_path / "m.csv"
        w = CSVWriter(p, TRIAL_COLUMNS, "x")
        for i in range(5):
            w.write_row([i] * len(TRIAL_COLUMNS))
            text = p.read_text()
            assert text.endswith("\n") and len(text.splitlines()) == i + 3
        w.close()

    def test_wrong_width(self, tmp_path):
        with CSVWriter(tmp_path / "m.csv", ("a", "b"), "x") as w:
            with pytest.raises(ValueError):
                w.write_row([1])

    def test_config_hash(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash(ENV) != config_hash(dataclasses.replace(ENV, max_actions=301))
        assert len(config_hash({})) == 64
