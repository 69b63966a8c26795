"""
Report templates for consistent command-line output.

Handlers build their stdout summaries here so every command prints the
same key=value style lines.
"""

from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..constants import ReferenceCosts


class ReportTemplates:
    """Collection of plain-text report templates."""

    @staticmethod
    def mdp_summary(path: str, horizon: int, table_shape: Sequence[int], mode: str,
                    action_evaluations: int, expected_cost: float) -> str:
        """
        Summary printed after solving the MDP.

        Args:
            path: Where the tables were written
            horizon: Number of slots
            table_shape: Per-user state counts
            mode: Recursion mode ("full" or "monotone")
            action_evaluations: Joint actions evaluated over all layers
            expected_cost: Optimal normalized objective from the zero state

        Returns:
            Formatted summary
        """
        states = 1
        for n in table_shape:
            states *= int(n)
        return (
            f"tables written: {path}\n"
            f"horizon={horizon} states={states} recursion={mode} "
            f"action_evaluations={action_evaluations}\n"
            f"expected_cost={expected_cost:.6f}"
        )

    @staticmethod
    def dataset_summary(path: str, records: int, paths: int, seed: int) -> str:
        return f"dataset written: {path}\nrecords={records} paths={paths} first_seed={seed}"

    @staticmethod
    def training_summary(path: str, summary: Mapping[str, object]) -> str:
        """Summary printed after training the network."""
        layers = "x".join(str(n) for n in summary.get("layer_sizes", []))  # type: ignore[union-attr]
        best = summary.get("best_validation_mse")
        best_text = f"{best:.6f}" if isinstance(best, float) else "n/a"
        return (
            f"model written: {path}\n"
            f"layers={layers} best_epoch={summary.get('best_epoch')} "
            f"best_validation_mse={best_text}"
        )

    @staticmethod
    def policy_table(results: Mapping[str, Tuple[float, float]], episodes: int, seed: int) -> str:
        """
        Per-policy mean cost table.

        Args:
            results: policy -> (mean, standard error)
            episodes: Episodes per policy
            seed: First path seed

        Returns:
            Aligned table, one policy per line
        """
        lines = [f"episodes={episodes} first_seed={seed}", f"{'policy':<10}{'mean_cost':>12}{'stderr':>12}"]
        for name, (mean, stderr) in results.items():
            lines.append(f"{name:<10}{mean:>12.4f}{stderr:>12.4f}")
        return "\n".join(lines)

    @staticmethod
    def sweep_table(param: str, table: Mapping[float, Mapping[str, float]],
                    policies: Sequence[str]) -> str:
        """Sweep value by policy grid of mean costs."""
        header = f"{param:<10}" + "".join(f"{p:>10}" for p in policies)
        lines = [header]
        for value in sorted(table):
            row = table[value]
            cells = "".join(f"{row[p]:>10.4f}" if p in row else f"{'-':>10}" for p in policies)
            lines.append(f"{value:<10g}{cells}")
        return "\n".join(lines)

    @staticmethod
    def reference_deviation(table: Mapping[float, Mapping[str, float]],
                            reference: Optional[Dict[float, Dict[str, float]]] = None) -> List[str]:
        """Lines naming every (value, policy) whose cost is outside the reference tolerance."""
        reference = reference if reference is not None else ReferenceCosts.IPROB_TABLE
        out = []
        for value, row in sorted(table.items()):
            expected = reference.get(value, {})
            for policy, cost in row.items():
                if policy in expected and abs(cost - expected[policy]) > ReferenceCosts.ACCEPTANCE_TOLERANCE:
                    out.append(f"{value:g} {policy}: {cost:.3f} vs reference {expected[policy]:.2f}")
        return out

    @staticmethod
    def results_written(path: str, rows: int) -> str:
        return f"results written: {path} ({rows} rows)"
