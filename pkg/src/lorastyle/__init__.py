"""Style embeddings built directly from LoRA adapter weights.

The pipeline: parse adapter files and flatten selected layers into high-
dimensional weight vectors (:mod:`lorastyle.lora_io`), fit a PCA embedding
over a labeled population (:mod:`lorastyle.embedding`), correct projection
drift of unseen adapters with a per-component affine calibration
(:mod:`lorastyle.calibration`), and evaluate by clustering and retrieval
(:mod:`lorastyle.cluster_eval`, :mod:`lorastyle.retrieval`). A synthetic
population generator (:mod:`lorastyle.dataset`) stands in for GPU
fine-tuning in tests and demos.
"""

__version__ = "0.1.0"

from . import calibration, cluster_eval, dataset, embedding, lora_io, retrieval
from .calibration import (
    CalibrationMap,
    CalibrationMode,
    CentroidPair,
    apply_calibration,
    compute_centroid_pairs,
    fit_calibration,
    minmax_normalized_offsets,
)
from .cluster_eval import (
    ClusterReport,
    Partition,
    adjusted_rand_index,
    cluster_eval_run,
    kmeans,
    normalized_mutual_information,
)
from .dataset import (
    Config,
    DatasetManifest,
    Split,
    SynthSpec,
    generate_synthetic,
    load_manifest,
    save_manifest,
    split_dataset,
)
from .embedding import (
    EmbeddingMatrix,
    EvalTask,
    PcaModel,
    compare_embeddings,
    embed_vectors,
    explained_variance_report,
    fit_pca,
    load_index,
    project,
    save_index,
    select_num_pcs,
)
from .lora_io import (
    LoraLayer,
    LoraModel,
    Subnetwork,
    SubnetworkSelector,
    WeightVector,
    classify_layer,
    parse_safetensors,
    vectorize,
    write_safetensors,
)
from .retrieval import (
    LabeledQueries,
    Metric,
    RankedResult,
    RetrievalIndex,
    RetrievalReport,
    Scenario,
    aggregate_features,
    average_precision,
    knn_query,
    recall_at_k,
    retrieval_eval,
)
