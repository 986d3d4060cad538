"""Element diagnostics: line strengths, detunings, leakage candidates."""
import numpy as np

from nvspin import model as mod
from nvspin import pulses as pul

for tag, m in (("nn", mod.nearest_neighbor_model(25.0)),
               ("3rd", mod.third_neighbor_model(25.0))):
    vals, vecs = mod.eigensystem(m)
    m_eig = vecs.conj().T @ pul.drive_operator(m) @ vecs
    print(f"== {tag} 25 mT: |M| > 1e-3 lines ==")
    rows = []
    for i in range(12):
        for j in range(i + 1, 12):
            el = abs(m_eig[i, j])
            if el > 1e-3:
                rows.append((float(vals[j] - vals[i]), (i, j), el))
    for nu, pair, el in sorted(rows):
        print(f"  {pair}  nu={nu:12.4f}  |M|={el:.6f}")
    print("  weak N-class lines:")
    for i in range(12):
        for j in range(i + 1, 12):
            el = abs(m_eig[i, j])
            nu = float(vals[j] - vals[i])
            if 1e-5 < el <= 1e-3 and nu < 10.0:
                print(f"  {(i, j)}  nu={nu:12.4f}  |M|={el:.6f}")
