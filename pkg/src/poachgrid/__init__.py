"""poachgrid: data-to-deployment poaching-risk prediction on a 1 km park grid."""

__version__ = "0.1.0"
