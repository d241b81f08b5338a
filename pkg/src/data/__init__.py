from .synthetic import (
    FAKE,
    REAL,
    Sample,
    SyntheticSpec,
    generate_synthetic,
    make_synthetic_spec,
    select_domains,
    stack_samples,
)
from .descriptor_io import read_samples, write_samples
