"""
Console/terminal formatter for experiment results
"""
from typing import Dict, List, Optional, Sequence

from tabulate import tabulate


def _pct(value: Optional[float]) -> str:
    # Rounded integer percentages exist only in this display layer
    if value is None:
        return "N/A"
    return f"{round(100 * value)}%"


class ConsoleFormatter:
    """Format experiment results for console/terminal display"""

    def _banner(self, title: str) -> List[str]:
        return ["=" * 80, f"  {title}", "=" * 80]

    def format_comparison(self, rows: Dict[str, Dict]) -> str:
        """Accuracy / MAP / MAR / MAF per model, FTL first when present"""
        output = self._banner("MODEL COMPARISON")
        names = sorted(rows, key=lambda n: (n != 'ftl', n))
        data = [
            [
                name.upper(),
                _pct(rows[name].get('accuracy')),
                _pct(rows[name].get('macro_precision')),
                _pct(rows[name].get('macro_recall')),
                _pct(rows[name].get('macro_f1')),
            ]
            for name in names
        ]
        output.append(tabulate(data, headers=["Model", "A", "MAP", "MAR", "MAF"], tablefmt="simple"))
        output.append("")
        return "\n".join(output)

    def format_rounds(self, logs: Sequence[Dict]) -> str:
        """Server metrics and per-client accuracy for every round"""
        output = self._banner("FEDERATED ROUNDS")
        n_clients = max((len(log['clients']) for log in logs), default=0)
        headers = ["Round", "A", "MAP", "MAR", "MAF"] + [f"Client {i}" for i in range(n_clients)] + ["Δw"]
        data = []
        for log in logs:
            server = log['server']
            delta = log.get('weight_delta')
            data.append(
                [log['round'], _pct(server['accuracy']), _pct(server['macro_precision']),
                 _pct(server['macro_recall']), _pct(server['macro_f1'])]
                + [_pct(c['eval_accuracy']) for c in log['clients']]
                + ["-" if delta is None else f"{delta:.2e}"]
            )
        output.append(tabulate(data, headers=headers, tablefmt="simple"))
        output.append("")
        return "\n".join(output)

    def format_report(self, report: Dict, title: str = "EVALUATION") -> str:
        """Headline metrics plus the per-class breakdown"""
        output = self._banner(title)
        headline = [
            ["Accuracy", _pct(report['accuracy'])],
            ["Macro precision", _pct(report['macro_precision'])],
            ["Macro recall", _pct(report['macro_recall'])],
            ["Macro F1", _pct(report['macro_f1'])],
        ]
        output.append(tabulate(headline, headers=["Metric", "Value"], tablefmt="simple"))
        output.append("")
        per_class = [
            [name, _pct(m['precision']), _pct(m['recall']), _pct(m['f1']), m['support']]
            for name, m in report['per_class'].items()
        ]
        output.append(tabulate(per_class, headers=["Class", "P", "R", "F1", "Support"], tablefmt="simple"))
        output.append("")
        return "\n".join(output)

    def format_preprocess(self, report: Dict) -> str:
        output = self._banner("PREPROCESSING")
        data = [[d['name'], d['reason']] for d in report['dropped_columns']]
        data += [[name, 'selected'] for name in report['selected_features']]
        data.append([report['label_column'], 'label'])
        output.append(tabulate(data, headers=["Column", "Outcome"], tablefmt="simple"))
        output.append(f"  Rows dropped: {report['rows_dropped']}")
        output.append("")
        return "\n".join(output)
