//! Registration and identification built from the lower-level modules.

use crate::error::Result;
use crate::feature::{extract_feature, FeatureVector};
use crate::frame::{FrameSequence, Role};
use crate::frameio::normalize_clip;
use crate::fusion::fused_ber;
use crate::registry::{Ownership, RegistrationRecord};
use crate::vss::{
    ber, build_ownership_share, master_share_from_feature, recover_watermark, stack_shares, Watermark,
};

/// Features of a 2D clip and its depth clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub fn_2d: FeatureVector,
    pub fn_depth: FeatureVector,
}

/// Normalizes one clip and extracts its feature. The clip's role decides the
/// feature's role; anything other than depth counts as 2D.
pub fn clip_feature(seq: &FrameSequence) -> Result<FeatureVector> {
    extract_feature(&normalize_clip(seq)?)
}

pub fn clip_features(seq_2d: &FrameSequence, seq_depth: &FrameSequence) -> Result<ClipFeatures> {
    let fn_depth = if seq_depth.role() == Role::Depth {
        clip_feature(seq_depth)?
    } else {
        clip_feature(&seq_depth.clone().with_role(Role::Depth)?)?
    };
    Ok(ClipFeatures {
        fn_2d: clip_feature(seq_2d)?,
        fn_depth,
    })
}

/// Builds the registry record binding both watermarks to the features.
pub fn build_record(
    id: &str,
    features: ClipFeatures,
    w_2d: Watermark,
    w_depth: Watermark,
) -> Result<RegistrationRecord> {
    let o_2d = build_ownership_share(&master_share_from_feature(&features.fn_2d)?, &w_2d)?;
    let o_depth = build_ownership_share(&master_share_from_feature(&features.fn_depth)?, &w_depth)?;
    Ok(RegistrationRecord {
        id: id.to_string(),
        fn_2d: features.fn_2d,
        fn_depth: features.fn_depth,
        o_2d,
        o_depth,
        w_2d,
        w_depth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub w_2d: Watermark,
    pub w_depth: Watermark,
    pub ber_2d: f64,
    pub ber_depth: f64,
    pub ber_fused: f64,
}

/// Recovers both watermarks from query features and stored ownership shares.
pub fn identify(own: &Ownership, query: &ClipFeatures, gamma: f64) -> Result<Identification> {
    let w_2d = recover_watermark(&stack_shares(&master_share_from_feature(&query.fn_2d)?, &own.o_2d))?;
    let w_depth = recover_watermark(&stack_shares(
        &master_share_from_feature(&query.fn_depth)?,
        &own.o_depth,
    ))?;
    let ber_2d = ber(&own.w_2d, &w_2d);
    let ber_depth = ber(&own.w_depth, &w_depth);
    Ok(Identification {
        ber_fused: fused_ber(ber_2d, ber_depth, gamma)?,
        w_2d,
        w_depth,
        ber_2d,
        ber_depth,
    })
}
