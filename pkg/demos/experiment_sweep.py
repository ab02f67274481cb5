"""
Sweeping the detection probability of one sensor
================================================

The same runs are available from the command line::

    python -m mscphd --scenario linear_8target --filter gcphd --filter icphd \
        --runs 2 --sweep p_d_variable_sensor=0.2,0.6,1.0 --out results
"""

from mscphd.cli import ExperimentConfig, run_experiment

exp = ExperimentConfig(
    "linear_8target",
    filters=("gcphd", "icphd"),
    runs=2,
    sweep_parameter="p_d_variable_sensor",
    sweep_values=(0.2, 0.6, 1.0),
)
for p_d, mode, mean_ospa, ms, _ in run_experiment(exp).aggregates:
    print(f"p_d={p_d}  {mode:6s}  OSPA {mean_ospa:6.2f}  {ms:5.1f} ms/update")
