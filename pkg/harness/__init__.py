# Experiment orchestration: run traces, metrics, sweeps and reports
