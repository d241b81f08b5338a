from .base import (
    AssignmentMatrix,
    AssignmentMode,
    ClusterStats,
    GapDescriptor,
    LocalFeatureSet,
    VladDescriptor,
    Vocabulary,
    compute_cluster_stats,
    hard_assign,
)
