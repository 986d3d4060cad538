"""Re-validate Bell presets through the production helpers."""
import numpy as np

from nvspin.evolution import NoiseSpec
from nvspin.model import nearest_neighbor_model
from nvspin.scan import bell_preparation, bell_fidelity_trace, compile_sequence

NN11 = nearest_neighbor_model(1.1)

for which, scheme in (("vc", "two"), ("vn", "two"), ("vc", "three")):
    prep = bell_preparation(NN11, which=which, scheme=scheme)
    total = compile_sequence(NN11, prep.seq).total_duration
    times = np.linspace(0.8 * total, total, 80)
    trace = bell_fidelity_trace(NN11, prep, NoiseSpec(), times)
    k = int(np.argmax(trace))
    print(f"{which} {scheme}: eigen={100*trace[k]:.3f}% "
          f"t_opt={times[k]:.1f} t_end={total:.1f} pair={prep.pair}")
