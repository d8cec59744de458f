import numpy as np
import pytest

from imifa.dist import RngStream
from imifa.errors import ValidationError
from imifa.mcmc import KINDS, ChainTrace, McmcControl, ModelConfig, count_nonempty, fit
from imifa.priors import MgpHyper, ProcessPrior

from conftest import batch_se

SHORT = dict(n_iter=120, burnin=40, thin=2)


def _cfg(kind, **kw):
    extra = {"MFA": dict(G=2, q=1), "MIFA": dict(G=2), "FA": dict(q=1), "OMFA": dict(q=1), "IMFA": dict(q=1)}
    return ModelConfig(kind=kind, control=McmcControl(**{**SHORT, **kw}), **extra.get(kind, {}))


class TestFitAllKinds:
    @pytest.mark.parametrize("kind", KINDS)
    def test_runs_and_records(self, toy_mfa, kind):
        d, _ = toy_mfa
        tr = fit(d, _cfg(kind))
        assert len(tr) == 40
        assert all(np.all(np.isfinite(ll)) for ll in tr.loglik)
        for s in range(len(tr)):
            z = tr.z[s]
            assert set(np.unique(z)) == set(range(1, tr.G0[s] + 1))
            assert len(tr.q[s]) == len(tr.pi[s]) == tr.G0[s]
        if kind in ("FA", "IFA"):
            assert set(tr.G0) == {1}
        if kind in ("FA", "MFA", "OMFA", "IMFA"):
            assert all(np.all(q == 1) for q in tr.q)

    def test_pitman_yor_with_fixed_discount(self, toy_mfa):
        d, _ = toy_mfa
        cfg = ModelConfig(kind="IMIFA", process=ProcessPrior(kind="py", alpha=0.5, d=0.2),
                          control=McmcControl(**SHORT))
        tr = fit(d, cfg)
        assert set(tr.d) == {0.2} and set(tr.alpha) == {0.5}

    def test_dirichlet_process_learns_alpha(self, toy_mfa):
        d, _ = toy_mfa
        cfg = ModelConfig(kind="IMFA", q=1, process=ProcessPrior(kind="dp", alpha="learn"),
                          control=McmcControl(**SHORT))
        tr = fit(d, cfg)
        assert len(set(tr.alpha)) > 1 and set(tr.d) == {0.0}


class TestDeterminism:
    def test_same_seed_identical_trace(self, toy_mfa, tmp_path):
        d, _ = toy_mfa
        a, b = fit(d, _cfg("IMIFA", seed=5)), fit(d, _cfg("IMIFA", seed=5))
        a.save(tmp_path / "a")
        b.save(tmp_path / "b")
        for name in ("trace.scalars.csv", "trace.z.bin", "trace.params.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_differs(self, toy_mfa):
        d, _ = toy_mfa
        a, b = fit(d, _cfg("IMIFA", seed=5)), fit(d, _cfg("IMIFA", seed=6))
        assert a.loglik != b.loglik


class TestTraceRoundTrip:
    @pytest.mark.parametrize("scores", [False, True])
    def test_save_load(self, toy_mfa, tmp_path, scores):
        d, _ = toy_mfa
        tr = fit(d, _cfg("OMIFA", store_scores=scores))
        tr.save(tmp_path)
        back = ChainTrace.load(tmp_path)
        assert back.loglik == tr.loglik and back.G0 == tr.G0 and back.d == tr.d
        for s in range(len(tr)):
            np.testing.assert_array_equal(back.z[s], tr.z[s])
            np.testing.assert_array_equal(back.pi[s], tr.pi[s])
            np.testing.assert_array_equal(back.params[s].mu, tr.params[s].mu)
            for la, lb in zip(back.params[s].loadings, tr.params[s].loadings):
                np.testing.assert_array_equal(la, lb)
            if scores:
                np.testing.assert_array_equal(back.eta[s], tr.eta[s])
        assert back.meta["config"]["kind"] == "OMIFA"

    def test_without_loadings(self, toy_mfa, tmp_path):
        d, _ = toy_mfa
        tr = fit(d, _cfg("MFA", store_loadings=False))
        tr.save(tmp_path)
        assert not (tmp_path / "trace.params.bin").exists()
        assert ChainTrace.load(tmp_path).params == []

    def test_missing_trace(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ChainTrace.load(tmp_path)


class TestConfigValidation:
    @pytest.mark.parametrize("kw", [dict(kind="MFA", q=1), dict(kind="FA"), dict(kind="FA", q=1, G=2),
                                    dict(kind="OMIFA", process=ProcessPrior(kind="dp")),
                                    dict(kind="IMIFA", process=ProcessPrior(kind="overfitted")),
                                    dict(kind="XFA")])
    def test_rejected(self, kw):
        with pytest.raises(ValidationError):
            ModelConfig(**kw)

    def test_q_above_p(self, toy_mfa):
        d, _ = toy_mfa
        with pytest.raises(ValidationError):
            fit(d, ModelConfig(kind="FA", q=9, control=McmcControl(**SHORT)))

    def test_dict_round_trip(self):
        cfg = ModelConfig(kind="IMIFA", mgp=MgpHyper(alpha2=6.0))
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestPriorReproduction:
    def test_mgp_conditionals_leave_prior_invariant(self, toy_mfa):
        """With the likelihood off and adaptation disabled the chain samples the MGP prior."""
        d, _ = toy_mfa
        h = MgpHyper(b0=50.0)
        cfg = ModelConfig(kind="IFA", q=3, mgp=h, control=McmcControl(n_iter=12000, burnin=0, thin=1))
        rec = {"delta": [], "phi": [], "lam2": []}

        def grab(state, model):
            rec["delta"].append(state.delta[0].copy())
            rec["phi"].append(state.phi[0][0, 0])
            rec["lam2"].append(state.loadings[0][0, 0] ** 2 * state.phi[0][0, 0] * state.tau[0][0])

        fit(d, cfg, callback=grab, ignore_data=True)
        delta = np.array(rec["delta"])
        want = np.array([h.alpha1 / h.beta1, h.alpha2 / h.beta2, h.alpha2 / h.beta2])
        assert np.all(np.abs(delta.mean(axis=0) - want) < 3 * batch_se(delta))
        assert abs(np.mean(rec["phi"]) - (h.nu + 1) / h.nu) < 3 * batch_se(rec["phi"])
        assert abs(np.mean(rec["lam2"]) - 1.0) < 3 * batch_se(rec["lam2"])


class TestHelpers:
    def test_count_nonempty(self, toy_mfa):
        from imifa.mcmc import Model, initialize

        d, _ = toy_mfa
        model = Model(d.x, _cfg("IMIFA", init_G=3))
        state = initialize(model, RngStream(0))
        assert count_nonempty(state) == np.unique(state.z).size
