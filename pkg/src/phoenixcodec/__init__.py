"""Low-resource neural speech codec: frequency-domain encoder, residual VQ, time-domain decoder."""

from .bitstream import BitstreamHeader, EncodedStream, measured_bitrate, pack, unpack
from .budget import BudgetReport, audit_model
from .ccr import CcrPolicy, CcrStage, CcrState, ablation_preset, loss_weights, observe_validation, should_stop
from .dsp import FramingConfig, SpectrogramConfig, Waveform, frame_count, istft, log_mel, read_wav, stft, write_wav
from .errors import ConfigError, CorruptStreamError, EncodeError, TrainingDivergenceError
from .losses import LossWeights, mel_loss
from .metrics import EvalReport, evaluate, logmel_distance, si_snr
from .model import CodecConfig, PhoenixCodec, load_codec, save_codec
from .nift import AugmentSpec, compose_batch
from .streaming import StreamingDecoder, StreamingEncoder, measured_latency

__version__ = "0.1.0"
