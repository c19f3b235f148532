"""signkit: keypoint-sequence gesture recognition toolkit.

Pipeline stages: landmark ingestion (.kpjl files), coordinate normalization
and Kalman smoothing, fixed-length resampling, augmentation, a from-scratch
CNN-BiLSTM classifier with training/evaluation tooling, and a sliding-window
streaming inference service.
"""

__version__ = "0.1.0"
