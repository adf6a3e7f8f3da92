"""Batch trial running with per-trial seed substreams and aggregation."""



from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import problems as problems_mod
from . import solver as solver_mod


def run_single_trial(instance, method, cfg, trial_seed, struct=None, init_kind=None):
    """One solve with the trial's substream seed; returns a summary dict."""
    cfg = replace(cfg, seed=trial_seed)
    prob = problems_mod.build_problem(instance, method, cfg, struct=struct, init_kind=init_kind)
    out = solver_mod.solve(prob.pair, prob.init(trial_seed), cfg,
                           verifier=prob.verifier, reinit=prob.init if cfg.stall_restart else None)
    return {"seed": trial_seed, "status": out.status, "iterations": out.iterations,
            "final_delta": out.final_delta, "restarts": out.restarts}


def _worker(payload):
    instance, method, cfg, trial_seed, struct, init_kind = payload
    return run_single_trial(instance, method, cfg, trial_seed, struct=struct, init_kind=init_kind)


def run_trials(instance, method, cfg, n_trials, jobs=1, struct=None, init_kind=None):
    """Run ``n_trials`` independent solves; trial t uses seed ``cfg.seed ^ t``.

    Results are independent of ``jobs`` (each trial is fully determined by
    its substream seed).
    """
    seeds = [cfg.seed ^ t for t in range(n_trials)]
    payloads = [(instance, method, cfg, s, struct, init_kind) for s in seeds]
    if jobs <= 1 or n_trials <= 1:
        return [_worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=min(jobs, n_trials)) as pool:
        return list(pool.map(_worker, payloads))


def aggregate(results, fit_exponential=False):
    """Success rate plus iteration statistics over the solved trials."""
    n = len(results)
    solved = [r["iterations"] for r in results if r["status"] == "solved"]
    agg = {
        "trials": n,
        "solved": len(solved),
        "success_rate": len(solved) / n if n else 0.0,
        "mean_iters": float(np.mean(solved)) if solved else None,
        "median_iters": float(np.median(solved)) if solved else None,
        "min_iters": int(np.min(solved)) if solved else None,
        "max_iters": int(np.max(solved)) if solved else None,
    }
    if fit_exponential:
        # maximum-likelihood rate for exponentially distributed run lengths
        agg["exponential_rate"] = (1.0 / agg["mean_iters"]
                                   if solved and agg["mean_iters"] else None)
    return agg
