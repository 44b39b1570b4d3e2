mod losses;
mod network;
mod train;

pub use losses::{
    aam_loss, ge2e_loss, pct_loss, pmt_loss, product_label, spk_plus_phrase_loss, AamHead, Ge2eParams,
    LossGrad, DEFAULT_AAM_MARGIN, DEFAULT_AAM_SCALE,
};
pub use network::{embed, forward, Extractor, ForwardOutput};
pub use train::{train, Heads, Strategy, TrainConfig, TrainData, TrainResult};
