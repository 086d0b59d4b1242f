//! Training losses, masking, optimization loops and gradient checking.

mod finetune;
mod gradcheck;
mod losses;
mod masking;
mod optim;
mod pretrain;

pub use finetune::{encode_final, finetune, finetune_batch_loss, FinetuneBatch, FinetuneConfig, FinetuneExample};
pub use gradcheck::{grad_check, grad_check_vec, relative_error, GradCheckReport, TensorCheck};
pub use losses::{
    aspect_loss, aspect_loss_grad, finetune_loss, finetune_loss_grad, grouped_aspect_loss, mlm_loss,
    objective_weights, AspectLossGrad, GroupedAspectLoss, ValueBank,
};
pub use masking::{apply_masking, Masked, MaskingPolicy};
pub use optim::{Adam, AdamConfig, Schedule};
pub use pretrain::{
    prepare_pretrain_examples, pretrain, pretrain_loss, pretrain_loss_grad, value_bank, AspectSides, LossBreakdown,
    LossLog, LossRow, MaskedDoc, PretrainBatch, PretrainConfig, PretrainExample,
};
