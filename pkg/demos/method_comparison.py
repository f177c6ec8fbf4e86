"""
Comparing the three range estimators
====================================

(G) uses broadband and tonal bins, (T) only the tonal bins, and (S) reads
the range off the striation slope.  A handful of seeded trials shows the
error spread of each; the CLI ``sweep`` command runs the full study.
"""

from wiranging.benchmark import percent_errors, rmse, run_trial
from wiranging.simulate import scenario

trials = [run_trial(scenario(seed=seed)) for seed in range(8)]

for method in ("G", "T", "S"):
    err = percent_errors(trials, method)
    print(f"{method}: RMSE {rmse(err):.2f}%  errors " + " ".join(f"{e:+.2f}" for e in err))

# with only two tones the tonal-only method has much less to work with
few = [run_trial(scenario(seed=seed, tones=(42.8, 44.2)), ("G", "T")) for seed in range(8)]
for method in ("G", "T"):
    print(f"{method}, 2 tones: RMSE {rmse(percent_errors(few, method)):.2f}%")
