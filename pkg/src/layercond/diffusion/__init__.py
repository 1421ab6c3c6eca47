from .attention import AttentionRecord, capture_attention
from .imageio import decode_pnm, encode_pgm, encode_ppm, read_pnm, write_pgm, write_ppm
from .model import DiffusionModel
from .sampling import ANCESTRAL, DDIM, DEFAULT_GUIDANCE, cfg_predict, ddpm_sample, from_uint8, to_uint8
from .schedule import NoiseSchedule, build_schedule, q_sample, respaced
from .training import DEFAULT_DROP_PROB, DropCounter, TrainStreams, draw_drops, train_step, validate_drop_prob
from .unet import UNet, UNetConfig, timestep_embedding

__all__ = [
    "ANCESTRAL",
    "AttentionRecord",
    "DDIM",
    "DEFAULT_DROP_PROB",
    "DEFAULT_GUIDANCE",
    "DiffusionModel",
    "DropCounter",
    "NoiseSchedule",
    "TrainStreams",
    "UNet",
    "UNetConfig",
    "build_schedule",
    "capture_attention",
    "cfg_predict",
    "ddpm_sample",
    "decode_pnm",
    "draw_drops",
    "encode_pgm",
    "encode_ppm",
    "from_uint8",
    "q_sample",
    "read_pnm",
    "respaced",
    "timestep_embedding",
    "to_uint8",
    "train_step",
    "validate_drop_prob",
]
