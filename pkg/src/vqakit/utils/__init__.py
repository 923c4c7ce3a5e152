from .seeding import derive_seed
from .validation import check_array_1d, check_consistent_length, check_finite

__all__ = ["derive_seed", "check_array_1d", "check_consistent_length", "check_finite"]
