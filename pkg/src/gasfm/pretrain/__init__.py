from .losses import (
    FalseNegativeMask,
    combined_pretrain_loss,
    contrastive_loss_ssl1,
    contrastive_loss_ssl2,
    cosine_similarity_matrix,
    denoise_loss,
    false_negative_mask,
    loss_weights,
    noise_mix_augment,
    pooled_representation,
)
from .trainer import AugmentedBatch, ProvenanceError, ProvenanceGuard, pretrain, pretrain_losses, sample_batch
