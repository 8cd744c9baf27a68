"""Data-generating oracles shared by the estimation tests."""
import numpy as np

from resloc.choice import (
    ChoiceData,
    ChoiceSet,
    estimate_segment,
    full_choice_set,
    sample_choice_set,
    sampling_probabilities,
    stack_choice_sets,
)


def mnl_draw(v, rng):
    p = np.exp(v - v.max())
    p /= p.sum()
    return int(rng.choice(len(v), p=p))


def recovery_data(seed, n_households=5000, n_cells=20, truth=(0.6, -1.2)):
    """Full choice sets over ``n_cells`` cells.

    Each household sees its own worker ABA at every cell and the cell land
    prices (10,000 JPY units); choices follow the MNL with ``truth`` plus a
    unit-coefficient size term.
    """
    rng = np.random.default_rng(seed)
    price = rng.uniform(1.0, 6.0, n_cells)
    size = np.log(rng.integers(20, 200, n_cells))
    aba = rng.normal(0.0, 1.0, (n_households, n_cells))
    X = np.stack([aba, np.broadcast_to(price, aba.shape)], axis=2)       # n x J x 2
    v = X @ np.asarray(truth) + size
    g = rng.gumbel(size=v.shape)
    chosen = np.argmax(v + g, axis=1)
    starts = np.arange(n_households + 1) * n_cells
    return ChoiceData(
        X.reshape(-1, 2),
        np.tile(size, n_households),
        starts,
        starts[:-1] + chosen,
        ("alpha_worker", "land_price"),
    )


def sampling_experiment(seed, n_households=3000, n_cells=15, truth=(-0.5, 0.6),
                        price_range=(0.5, 8.0), correction="inclusion_probability",
                        use_correction=True):
    """Estimate on full sets and on 50-draw price-weighted samples of the same choices."""
    rng = np.random.default_rng(seed)
    price = np.exp(np.linspace(np.log(price_range[0]), np.log(price_range[1]), n_cells))
    x = rng.normal(0.0, 1.0, n_cells)
    X = np.column_stack([price, x])
    v = X @ np.asarray(truth)
    names = ("land_price", "x")
    probs = sampling_probabilities(price)
    full, sampled = [], []
    for i in range(n_households):
        c = mnl_draw(v, rng)
        cs = full_choice_set(n_cells, chosen=c, household_id=i)
        full.append(ChoiceSet(i, cs.cells, cs.corrections, cs.draws, cs.chosen,
                              X[cs.cells], np.zeros(len(cs)), names))
        ss = sample_choice_set(price, rng, 50, chosen=c, household_id=i,
                               correction=correction, probabilities=probs)
        corr = ss.corrections if use_correction else np.zeros(len(ss))
        sampled.append(ChoiceSet(i, ss.cells, corr, ss.draws, ss.chosen,
                                 X[ss.cells], np.zeros(len(ss)), names))
    rf = estimate_segment(stack_choice_sets(full))
    rs = estimate_segment(stack_choice_sets(sampled))
    pooled = np.sqrt(rf.std_errors ** 2 + rs.std_errors ** 2)
    return rf, rs, np.abs(rs.coefficients - rf.coefficients) / pooled
