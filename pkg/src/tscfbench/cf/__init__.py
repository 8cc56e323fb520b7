from .base import (
    STATUS_NO_CF,
    STATUS_OK,
    STATUS_TIMED_OUT,
    Budget,
    CFRequest,
    Counterfactual,
    InvocationRecord,
    MethodNotApplicable,
)
from .comte import ComteConfig, comte
from .native_guide import native_guide
from .nsga import crowding_distance, dominates, fast_non_dominated_sort
from .nun import nun, nun_cf, nun_index
from .sets import SetsConfig, Shapelet, ShapeletSet, sets, sets_mine
from .tsevo import TsevoConfig, tsevo
from .wachter import WachterConfig, mad_from_train, wachter

__all__ = [
    "Budget",
    "CFRequest",
    "ComteConfig",
    "Counterfactual",
    "InvocationRecord",
    "MethodNotApplicable",
    "STATUS_NO_CF",
    "STATUS_OK",
    "STATUS_TIMED_OUT",
    "SetsConfig",
    "Shapelet",
    "ShapeletSet",
    "TsevoConfig",
    "WachterConfig",
    "comte",
    "crowding_distance",
    "dominates",
    "fast_non_dominated_sort",
    "mad_from_train",
    "native_guide",
    "nun",
    "nun_cf",
    "nun_index",
    "sets",
    "sets_mine",
    "tsevo",
    "wachter",
]
