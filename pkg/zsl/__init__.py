# zsl/__init__.py
from zsl.errors import ZslError
from zsl.taxonomy import Rank, RelevanceLevel, Taxonomy, kinship_rank, load_taxonomy, relevance_of, select_auxiliary
from zsl.evaluation import harmonic_mean, improvement_rate
