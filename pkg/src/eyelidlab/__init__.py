"""eyelidlab: eyeball calibration and gaze-conditioned dynamic neural SDF
reconstruction of the eyelid region, with mesh extraction, metric
evaluation, and interactive posing."""

__version__ = "0.1.0"
