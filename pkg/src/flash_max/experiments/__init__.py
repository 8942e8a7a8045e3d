from flash_max.experiments.ablation import run_ablation
from flash_max.experiments.data_budget import run_data_budget
from flash_max.experiments.gradcheck import run_gradcheck
from flash_max.experiments.race import run_race
from flash_max.experiments.single import run_eval, run_exact_init, run_export_field, run_train
from flash_max.experiments.time_budget import run_time_budget
from flash_max.experiments.verify import run_verify

__all__ = [
    "run_ablation",
    "run_data_budget",
    "run_eval",
    "run_exact_init",
    "run_export_field",
    "run_gradcheck",
    "run_race",
    "run_time_budget",
    "run_train",
    "run_verify",
]
