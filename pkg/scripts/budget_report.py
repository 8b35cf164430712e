"""Error-budget prediction next to the protocol simulation under the same noise."""
import json

from qgt.budget import ErrorBudget, TimingTable, budget_fidelity, budget_sum, budget_uncertainty, timing_report
from qgt.protocol import NoiseConfig, induced_choi
from qgt.qlinalg import CNOT, entanglement_fidelity

if __name__ == "__main__":
    b = ErrorBudget.table1()
    total, sigma = budget_sum(b)
    print(json.dumps({
        "budget_fidelity": budget_fidelity(b),
        "budget_fidelity_sd": budget_uncertainty(b, n_mc=400, seed=0),
        "linear_sum": total,
        "linear_sum_sd": sigma,
        "protocol_fidelity": entanglement_fidelity(induced_choi(NoiseConfig.table1()), CNOT),
        "timing": timing_report(TimingTable.reference()),
    }, indent=1))
