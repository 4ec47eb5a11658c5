"""EHR table dumps to labeled prediction corpora, LR baseline, and
exact PR-AUC/ROC-AUC evaluation."""

__version__ = "0.1.0"

from .codemap import (  # noqa: F401
    CodeSystem,
    ConceptMap,
    DescriptionTable,
    MedicalCode,
    describe,
    load_concept_map,
    load_descriptions,
    map_code,
    normalize_code,
    save_concept_map,
)
from .cohort import (  # noqa: F401
    CohortStats,
    LabeledSequence,
    Split,
    TaskKind,
    TaskSpec,
    assign_split,
    assign_splits,
    build_next_diagnosis_cohort,
    build_next_visit_cohort,
    build_readmission_cohort,
    cohort_stats,
    dump_cohort,
    load_cohort,
)
from .lrbaseline import (  # noqa: F401
    DesignMatrix,
    FeatureSpace,
    GridSearchSpec,
    LRModel,
    featurize,
    grid_search,
    predict_proba,
    train_lr,
)
from .metrics import (  # noqa: F401
    MetricSummary,
    PredictionSet,
    compare_report,
    load_prediction_file,
    mean_ci,
    pr_auc,
    roc_auc,
    write_prediction_file,
)
from .promptgen import (  # noqa: F401
    PromptExample,
    PromptTemplate,
    VocabExtension,
    compute_vocab_extension,
    default_template,
    emit_corpus,
    render_prompt,
)
from .readers import read_eicu_tables, read_mimic_tables  # noqa: F401
from .store import PatientStore  # noqa: F401
from .synth import SynthConfig, SynthResult, generate_synthetic  # noqa: F401
