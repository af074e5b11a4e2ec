from .scaling import MinMaxScaler
from .ann import AnnHyper, AnnParams, train_ann
from .svr import SvrHyper, SvrModel, train_svr, svr_predict, rbf_kernel
from .bagging import (
    TECH_ANN,
    TECH_SVR,
    BaggedModel,
    Replicate,
    bagged_fit,
    bagged_predict,
    grid_search_svr,
    oof_predictions,
)
from . import registry

__all__ = [
    "MinMaxScaler",
    "AnnHyper",
    "AnnParams",
    "train_ann",
    "SvrHyper",
    "SvrModel",
    "train_svr",
    "svr_predict",
    "rbf_kernel",
    "TECH_ANN",
    "TECH_SVR",
    "BaggedModel",
    "Replicate",
    "bagged_fit",
    "bagged_predict",
    "grid_search_svr",
    "oof_predictions",
    "registry",
]
