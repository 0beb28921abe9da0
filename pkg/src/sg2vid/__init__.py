"""sg2vid: scene-graph-conditioned video synthesis at desk scale.

Pipeline: synthetic scripted videos with ground-truth masks/flow/depth ->
per-frame scene graphs -> contrastive + reconstruction pretraining of dual
graph encoders -> first-frame-conditioned latent video diffusion ->
evaluation against the conditioning graphs via an oracle detector. A CLI and
HTTP service front every stage; a browser editor drives what-if generation.
"""

__version__ = "0.1.0"
