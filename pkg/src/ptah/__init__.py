"""ptah: a verifiable multi-agent harness for interleaved image-text reports.

The lifecycle runs plan -> research -> write -> refine -> render, with a
verifier gating every stage transition; evaluation adds per-image,
per-page, and citation metrics over the finished artifact.
"""

__version__ = "0.1.0"
