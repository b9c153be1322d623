# The reference networks are also published through the pytest11 entry point;
# importing them here keeps the suite runnable from a plain checkout.
from overflowlab.pytest import asymmetric_tandem, mm1, symmetric_tandem  # noqa: F401
