"""External-memory sorting laboratory on a simulated block device."""

from .bounds import BoundInputs, merge_phases, permute_lb, sort_e, tall_cache_transfer_lb, transfer_lb
from .buffer_pq import BufferTreePQ, pq_deletemin, pq_insert, pq_new, pq_sort
from .distribution_sort import compute_splitters, distribute, external_distribution_sort
from .em_model import (AccountingError, BlockError, BudgetExceeded, ConfigError,
                       Disk, DiskConfig, FileDisk, IoStats, Run, RunWriter,
                       create_disk)
from .harness import ExperimentReport, permute, run_experiment
from .internal_algos import SplitterSet, internal_sort, linear_split, select_kth
from .merge_sort import external_merge_sort, form_runs, merge_runs
from .selection import external_select
from .split_sort import online_split_pass, split_bucket, split_sort

__all__ = ["AccountingError", "BlockError", "BoundInputs", "BudgetExceeded",
           "BufferTreePQ", "ConfigError", "Disk", "DiskConfig", "ExperimentReport",
           "FileDisk", "IoStats", "Run", "RunWriter", "SplitterSet",
           "compute_splitters", "create_disk", "distribute",
           "external_distribution_sort", "external_merge_sort", "external_select",
           "form_runs", "internal_sort", "linear_split", "merge_phases", "merge_runs",
           "online_split_pass", "permute", "permute_lb", "pq_deletemin", "pq_insert",
           "pq_new", "pq_sort", "run_experiment", "select_kth", "sort_e",
           "split_bucket", "split_sort", "tall_cache_transfer_lb", "transfer_lb"]
