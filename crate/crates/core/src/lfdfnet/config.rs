use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blocks::BlockConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Rigid 3x3 convs in place of the deformable ones; no offset branch.
    NoDcn,
    /// No angular alignment: a residual block per view per stage.
    NoAdam,
    /// Collection only; side views are refined independently.
    NoDist,
    NoAsppFem,
    NoAsppOfb,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoDcn,
        Variant::NoAdam,
        Variant::NoDist,
        Variant::NoAsppFem,
        Variant::NoAsppOfb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDcn => "no_dcn",
            Variant::NoAdam => "no_adam",
            Variant::NoDist => "no_dist",
            Variant::NoAsppFem => "no_aspp_fem",
            Variant::NoAsppOfb => "no_aspp_ofb",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Angular size `A` of the square view array.
    pub angular: usize,
    /// Feature depth `C`.
    pub channels: usize,
    /// Deformable kernel size `k`.
    pub kernel_size: usize,
    /// Offset channels `C'`; must equal `2 k²`.
    pub offset_channels: usize,
    /// Number of cascaded alignment modules `K`.
    pub adams: usize,
    /// Number of IMDBs `N`.
    pub imdbs: usize,
    pub alpha: usize,
    pub variant: Variant,
    /// Residual ASPP blocks in the feature extractor.
    pub fem_aspp_blocks: usize,
    /// Plain residual blocks after them.
    pub fem_res_blocks: usize,
    /// Residual ASPP blocks inside the offset branch.
    pub ofb_aspp_blocks: usize,
    pub imdb_stages: usize,
    pub leaky_slope: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            angular: 5,
            channels: 32,
            kernel_size: 3,
            offset_channels: 18,
            adams: 3,
            imdbs: 4,
            alpha: 2,
            variant: Variant::Full,
            fem_aspp_blocks: 2,
            fem_res_blocks: 2,
            ofb_aspp_blocks: 2,
            imdb_stages: 3,
            leaky_slope: 0.1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.angular == 0 || self.angular.is_multiple_of(2) {
            return bad(format!("angular size {} must be odd", self.angular));
        }
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        if self.offset_channels != 2 * self.kernel_size * self.kernel_size {
            return bad(format!(
                "offset channels {} != 2 * {}²",
                self.offset_channels, self.kernel_size
            ));
        }
        if self.alpha == 0 {
            return bad("alpha must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return bad(format!("leaky slope {} outside [0, 1)", self.leaky_slope));
        }
        self.blocks().validate()
    }

    pub fn blocks(&self) -> BlockConfig {
        BlockConfig {
            leaky_slope: self.leaky_slope,
            imdb_stages: self.imdb_stages,
            ..BlockConfig::for_channels(self.channels)
        }
    }

    pub fn num_views(&self) -> usize {
        self.angular * self.angular
    }

    /// Raster index of the center view.
    pub fn center_view(&self) -> usize {
        self.num_views() / 2
    }

    /// Side views in raster order, then the center: the channel order of
    /// collected features and of the per-view split of the fused feature.
    pub fn collect_order(&self) -> Vec<usize> {
        let c = self.center_view();
        (0..self.num_views())
            .filter(|&v| v != c)
            .chain(std::iter::once(c))
            .collect()
    }

    /// Channels of the fused feature, `A² C` (or `C` without distribution).
    pub fn fused_channels(&self) -> usize {
        match self.variant {
            Variant::NoDist => self.channels,
            _ => self.num_views() * self.channels,
        }
    }

    /// Channels entering reconstruction, `(K + 1) C`.
    pub fn reconstruction_channels(&self) -> usize {
        (self.adams + 1) * self.channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = NetworkConfig::default();
        c.validate().unwrap();
        assert_eq!(c.offset_channels, 18);
        assert_eq!(c.fused_channels(), 800);
        assert_eq!(c.reconstruction_channels(), 128);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for f in [
            |c: &mut NetworkConfig| c.angular = 4,
            |c: &mut NetworkConfig| c.offset_channels = 16,
            |c: &mut NetworkConfig| c.alpha = 0,
            |c: &mut NetworkConfig| c.channels = 0,
        ] {
            let mut c = NetworkConfig::default();
            f(&mut c);
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn collect_order_puts_center_last() {
        let c = NetworkConfig {
            angular: 3,
            ..Default::default()
        };
        assert_eq!(c.collect_order(), vec![0, 1, 2, 3, 5, 6, 7, 8, 4]);
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
        assert!("nope".parse::<Variant>().is_err());
    }
}
