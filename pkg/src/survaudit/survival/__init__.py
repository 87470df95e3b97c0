"""Survival estimators and scores."""

from .cox import (CoxFitError, CoxModel, PartialLikelihood, UnivariateCox, cox_univariate, fit_cox,
                  predict_risk, predict_survival)
from .data import SurvivalData
from .forest import ForestModel, ForestParams, fit_rsf, forest_risk, forest_survival
from .km import KMCurve, kaplan_meier, nelson_aalen
from .metrics import brier_curve, c_index, ibs_grid, integrated_brier

__all__ = [
    "CoxFitError", "CoxModel", "PartialLikelihood", "UnivariateCox", "cox_univariate", "fit_cox",
    "predict_risk", "predict_survival", "SurvivalData", "ForestModel", "ForestParams", "fit_rsf",
    "forest_risk", "forest_survival", "KMCurve", "kaplan_meier", "nelson_aalen", "brier_curve",
    "c_index", "ibs_grid", "integrated_brier",
]
