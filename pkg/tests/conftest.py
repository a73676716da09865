import numpy as np
import pytest

from fuzzmpc.config import ExperimentConfig
from fuzzmpc.experiments import collect_identification_data, identify_models
from fuzzmpc.fuzzy import FUZZY, PROBABILISTIC, FuzzyRule, Interpretation, RuleBase, Type1MF, Type2MF


@pytest.fixture(scope="session")
def cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def dataset(cfg):
    return collect_identification_data(cfg)


@pytest.fixture(scope="session")
def models(cfg, dataset):
    return {c: identify_models(cfg, dataset, c)[0] for c in (1, 2)}


def random_mf(rng, lo=0.0, hi=10.0):
    a, b, c = np.sort(rng.uniform(lo, hi, 3))
    return Type1MF(a, b, c + 1e-6)


def random_rule_base(rng, dims, n_interp=1, kind=PROBABILISTIC, n_rules=3, t_norm="min", wide=True):
    """Random rule base; with ``wide`` every rule has a broad support so something fires on [0, 10]."""
    rules = []
    if kind == PROBABILISTIC:
        masses = [rng.dirichlet(np.ones(n_interp)) for _ in range(dims)]
    for _ in range(n_rules):
        terms = []
        for d in range(dims):
            its = []
            for i in range(n_interp):
                if wide:
                    peak = rng.uniform(0, 10)
                    mf = Type1MF(peak - rng.uniform(5, 15), peak, peak + rng.uniform(5, 15))
                else:
                    mf = random_mf(rng)
                sec = masses[d][i] if kind == PROBABILISTIC else (1.0 if n_interp == 1 else rng.uniform(0.1, 1))
                its.append(Interpretation(mf, sec))
            terms.append(Type2MF(kind, tuple(its)))
        rules.append(FuzzyRule(tuple(terms), tuple(rng.normal(size=dims + 1))))
    return RuleBase(tuple(rules), t_norm)
