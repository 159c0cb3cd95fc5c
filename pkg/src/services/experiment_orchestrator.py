"""
Experiment orchestrator service.

Maps each CLI subcommand to a handler that resolves defaults, runs the
numerics and packs the outcome into a Report. Handlers take a plain
parameter dict so the same run can be replayed from a report's ``inputs``.
"""

import logging
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from src.analysis import benchmarks, kertz, policies
from src.analysis.decomposition import SmallnessMode, decompose
from src.analysis.ordering import order_general
from src.core.config import settings
from src.core.errors import DomainError
from src.models.schemas import Report
from src.services.instance_io import parse_instance, write_instance
from src.services.report_service import write_curve_csv

logger = logging.getLogger(__name__)

Handler = Callable[[Dict[str, Any]], Report]

POLICIES = ("small", "imperfect", "frequent", "baseline")


def _param(params: Dict[str, Any], key: str, default: Any = None) -> Any:
    value = params.get(key)
    return default if value is None else value


def _ratio(value: float, benchmark: float) -> float:
    return value / benchmark if benchmark > 0 else float("nan")


def run_beta(params: Dict[str, Any]) -> Report:
    tol = _param(params, "tol", settings.kertz_tolerance)
    beta = kertz.solve_beta(tol)
    return Report(
        command="beta",
        inputs={"tol": tol},
        results={
            "beta": beta,
            "ratio_inverse": 1.0 / beta,
            "residual": kertz.kertz_integral(beta) - 1.0,
        },
    )


def run_ydump(params: Dict[str, Any]) -> Report:
    grid = int(_param(params, "grid", settings.kertz_grid_size))
    tol = params.get("tol")
    beta = kertz.solve_beta(tol if tol is not None else settings.kertz_tolerance)
    sol = kertz.solve_y(beta, grid)
    frame = pd.DataFrame({"t": sol.t_grid, "y": sol.y_grid, "yprime": sol.yprime_grid})
    out = params.get("out")
    if out:
        write_curve_csv(frame, out)
    return Report(
        command="ydump",
        inputs={"grid": grid, "tol": tol, "out": out},
        results={
            "beta": sol.beta,
            "t_end": float(frame["t"].iloc[-1]),
            "y_start": float(frame["y"].iloc[0]),
            "y_end": float(frame["y"].iloc[-1]),
            "yprime_start": float(frame["yprime"].iloc[0]),
            "rows": len(frame),
        },
    )


def run_worstcase(params: Dict[str, Any]) -> Report:
    q = float(params["q"])
    n = int(_param(params, "n", settings.tightness_min_n))
    points = params.get("points")
    sol = kertz.default_solution()
    wc = kertz.worst_case_params(q, sol, points)
    limit_opt, limit_max = kertz.limit_values(wc)

    inst = kertz.worst_case_instance(q, n, sol, points)
    exact_opt, _ = benchmarks.opt_iid(inst[0], n)
    exact_max = benchmarks.expected_max(inst)
    out = params.get("out")
    if out:
        write_instance(inst, out)
    return Report(
        command="worstcase",
        inputs={"q": q, "n": n, "points": points, "out": out},
        results={
            "beta": sol.beta,
            "p": wc.p,
            "H": wc.H,
            "r_star_q": wc.r_star_q,
            "limit_opt": limit_opt,
            "limit_max": limit_max,
            "limit_ratio": _ratio(limit_opt, limit_max),
            "opt": exact_opt,
            "max": exact_max,
            "ratio": _ratio(exact_opt, exact_max),
            "support_size": inst[0].support_size,
        },
    )


def _parse_what(what: str) -> Optional[int]:
    if what in ("max", "opt", "optfree"):
        return None
    if what.startswith("maxk:"):
        try:
            return int(what.split(":", 1)[1])
        except ValueError:
            pass
    raise DomainError(f"--what must be max, maxk:K, opt or optfree, got {what!r}")


def run_bench(params: Dict[str, Any]) -> Report:
    what = _param(params, "what", "max")
    k = _parse_what(what)
    inst = parse_instance(params["instance"])
    results: Dict[str, Any] = {"n": inst.n, "m": inst.m}
    if what == "max":
        results["value"] = benchmarks.expected_max(inst)
    elif k is not None:
        results["k"] = k
        results["value"] = benchmarks.expected_kth_max(inst, k)
    elif what == "opt":
        results["value"] = benchmarks.opt_random_order(inst)
    else:
        value, order = benchmarks.opt_free_order(inst)
        results["value"] = value
        results["order"] = list(order)
    return Report(
        command="bench", inputs={"instance": str(params["instance"]), "what": what}, results=results
    )


def run_eval(params: Dict[str, Any]) -> Report:
    policy = _param(params, "policy", "small")
    if policy not in POLICIES:
        raise DomainError(f"--policy must be one of {list(POLICIES)}, got {policy!r}")
    eps = float(_param(params, "eps", 0.1))
    trials = int(_param(params, "trials", settings.default_trials))
    seed = int(_param(params, "seed", settings.default_seed))
    variant = _param(params, "variant", "weak")
    multiplier = params.get("removal_multiplier")
    inst = parse_instance(params["instance"])

    inputs = {
        "instance": str(params["instance"]),
        "policy": policy,
        "eps": eps,
        "trials": trials,
        "seed": seed,
    }
    flags: List[str] = []
    full_max = benchmarks.expected_max(inst)
    if policy == "small":
        pol = policies.small_prophets_policy(inst, eps)
        sim = policies.run_time_policy(inst, pol, trials, seed)
        results = {**sim.to_dict(), "benchmark": full_max, "ratio": _ratio(sim.mean, full_max)}
    elif policy == "baseline":
        sim = policies.single_threshold_baseline(inst, trials, seed)
        results = {**sim.to_dict(), "benchmark": full_max, "ratio": _ratio(sim.mean, full_max)}
    elif policy == "imperfect":
        inputs.update(variant=variant, removal_multiplier=multiplier)
        budget = policies.removal_budget(eps, multiplier)
        res = policies.imperfect_prophet_policy(inst, eps, None, seed, trials, variant, budget)
        kth = benchmarks.expected_kth_max(inst, min(len(res.removed) + 1, inst.n))
        results = {**res.to_dict(), "max": full_max, "kth_max": kth, "budget": budget}
    else:
        inputs.update(removal_multiplier=multiplier)
        budget = policies.removal_budget(eps, multiplier)
        res = policies.frequent_guarantee(inst, eps, None, seed, trials, budget)
        results = {**res.to_dict(), "budget": budget}
        flags.extend(res.warnings)
    return Report(command="eval", inputs=inputs, results=results, flags=flags)


def run_order(params: Dict[str, Any]) -> Report:
    eps = float(_param(params, "eps", 0.1))
    seed = int(_param(params, "seed", settings.default_seed))
    allow_adjust = bool(_param(params, "allow_adjust", True))
    fixing_cap = params.get("fixing_cap")
    inst = parse_instance(params["instance"])

    res = order_general(inst, eps, seed, allow_adjust=allow_adjust, fixing_cap=fixing_cap)
    results = {**res.to_dict(), "value": res.value, "refined_value": res.refined.value}
    if inst.n <= settings.subset_dp_max_n:
        oracle, oracle_order = benchmarks.opt_free_order(inst)
        results.update(
            oracle_value=oracle,
            oracle_order=list(oracle_order),
            ratio=_ratio(res.value, oracle),
        )
    return Report(
        command="order",
        inputs={
            "instance": str(params["instance"]),
            "eps": eps,
            "seed": seed,
            "allow_adjust": allow_adjust,
            "fixing_cap": fixing_cap,
        },
        results=results,
        flags=res.flags(),
    )


def run_decompose(params: Dict[str, Any]) -> Report:
    eps = float(_param(params, "eps", 0.1))
    k = int(_param(params, "k", 0))
    mode = _param(params, "mode", SmallnessMode.EPS_T_SMALL.value)
    if mode not in {m.value for m in SmallnessMode}:
        raise DomainError(f"--mode must be eps_t_small or eps_small, got {mode!r}")
    mode = SmallnessMode(mode)
    inst = parse_instance(params["instance"])
    res = decompose(inst, eps, k, mode)
    return Report(
        command="decompose",
        inputs={"instance": str(params["instance"]), "eps": eps, "k": k, "mode": mode.value},
        results={**res.to_dict(), "survivors": len(res.survivors)},
    )


class ExperimentOrchestrator:
    """
    Registry of command handlers.

    ``ydump`` and ``worstcase`` write their own artifact (CSV curve or
    instance document) to ``out``; every other command's ``out`` is the
    report itself.
    """

    ARTIFACT_COMMANDS = frozenset({"ydump", "worstcase"})

    def __init__(self):
        self._handlers: Dict[str, Handler] = {}
        self._register_default_handlers()

    def _register_default_handlers(self):
        for name, handler in (
            ("beta", run_beta),
            ("ydump", run_ydump),
            ("worstcase", run_worstcase),
            ("bench", run_bench),
            ("eval", run_eval),
            ("order", run_order),
            ("decompose", run_decompose),
        ):
            self.register_handler(name, handler)

    def register_handler(self, command: str, handler: Handler):
        """
        Register a handler for a command.

        Args:
            command: Subcommand name
            handler: Function taking the parameter dict and returning a Report
        """
        self._handlers[command] = handler
        logger.debug(f"Registered handler for command: {command}")

    def get_handler(self, command: str) -> Optional[Handler]:
        return self._handlers.get(command)

    def list_available_commands(self) -> List[str]:
        return list(self._handlers.keys())

    def writes_artifact(self, command: str) -> bool:
        return command in self.ARTIFACT_COMMANDS

    def run(self, command: str, params: Dict[str, Any]) -> Report:
        """
        Run a command.

        Raises:
            DomainError: If no handler is registered for ``command``
        """
        handler = self.get_handler(command)
        if handler is None:
            raise DomainError(
                f"No handler registered for command '{command}'. "
                f"Available: {self.list_available_commands()}"
            )
        logger.info(f"Running '{command}'")
        try:
            return handler(params)
        except Exception as e:
            logger.debug(f"Command '{command}' failed: {e}")
            raise


# Global orchestrator instance
experiment_orchestrator = ExperimentOrchestrator()
