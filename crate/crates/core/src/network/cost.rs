//! Parameter and FLOP accounting.
//!
//! FLOP conventions, per element unless noted:
//!
//! | op                         | FLOPs                                 |
//! |----------------------------|---------------------------------------|
//! | conv                       | `2*kh*kw*c_in*c_out*Ho*Wo`, plus `c_out*Ho*Wo` for the bias |
//! | batch norm (inference)     | 2 per output                          |
//! | ReLU, add, multiply        | 1 per output                          |
//! | sigmoid                    | 4 per output                          |
//! | pooling (max, average)     | 1 per input                           |
//! | channel mean + max         | 2 per input                           |
//! | bilinear upsampling        | 6 per output; nearest is 0            |
//! | softmax                    | 4 per input                           |
//! | channel-weighted sum       | 2 per input                           |
//! | shifts, splits, concats    | 0                                     |
//!
//! Counts are for a single image at the configured input size.

use crate::blocks::{GROUPS, MSRCM_KERNELS};
use crate::error::Result;
use crate::nn::UpsampleMode;

use super::config::{NetworkConfig, STAGES};
use super::model::{IMAGE_CHANNELS, OUTPUT_CHANNELS};

/// One convolution; `applications` > 1 for kernels shared across groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvCost {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub output: (usize, usize),
    pub applications: u64,
    pub params: u64,
    pub flops: u64,
}

impl ConvCost {
    pub fn new(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        output: (usize, usize),
        bias: bool,
    ) -> Self {
        let (kh, kw) = kernel;
        let weights = (c_out * c_in * kh * kw) as u64;
        let bias_terms = if bias { c_out as u64 } else { 0 };
        let positions = (output.0 * output.1) as u64;
        ConvCost {
            name: name.into(),
            c_in,
            c_out,
            kernel,
            output,
            applications: 1,
            params: weights + bias_terms,
            flops: 2 * weights * positions + bias_terms * positions,
        }
    }

    /// Weight scalars only, excluding the bias.
    pub fn weight_params(&self) -> u64 {
        (self.c_out * self.c_in * self.kernel.0 * self.kernel.1) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleCost {
    pub name: &'static str,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub total_params: u64,
    pub total_flops: u64,
    /// Breakdown by module: encoder, dscrim, decoder, msffm, msrcm, head.
    pub modules: Vec<ModuleCost>,
    pub convs: Vec<ConvCost>,
}

struct Counter {
    modules: Vec<ModuleCost>,
    convs: Vec<ConvCost>,
}

impl Counter {
    fn module(&mut self, name: &'static str) -> &mut ModuleCost {
        if let Some(i) = self.modules.iter().position(|m| m.name == name) {
            return &mut self.modules[i];
        }
        self.modules.push(ModuleCost {
            name,
            params: 0,
            flops: 0,
        });
        self.modules.last_mut().unwrap()
    }

    fn conv(&mut self, module: &'static str, c: ConvCost) {
        let m = self.module(module);
        m.params += c.params;
        m.flops += c.flops;
        self.convs.push(c);
    }

    fn conv_at(
        &mut self,
        module: &'static str,
        name: String,
        c_in: usize,
        c_out: usize,
        k: (usize, usize),
        hw: (usize, usize),
    ) {
        self.conv(module, ConvCost::new(name, c_in, c_out, k, hw, true));
    }

    fn bn(&mut self, module: &'static str, channels: usize, elements: u64) {
        let m = self.module(module);
        m.params += 4 * channels as u64;
        m.flops += 2 * elements;
    }

    fn ops(&mut self, module: &'static str, flops: u64) {
        self.module(module).flops += flops;
    }
}

fn area(hw: (usize, usize)) -> u64 {
    (hw.0 * hw.1) as u64
}

fn upsample_flops(mode: UpsampleMode, out_elements: u64) -> u64 {
    match mode {
        UpsampleMode::Bilinear => 6 * out_elements,
        UpsampleMode::Nearest => 0,
    }
}

/// Walks the same wiring as the forward pass, without touching any tensors.
pub fn count_cost(cfg: &NetworkConfig) -> Result<CostReport> {
    cfg.validate()?;
    let mut k = Counter {
        modules: Vec::new(),
        convs: Vec::new(),
    };
    let ch = &cfg.encoder_channels;
    let [h, w] = cfg.input_size;
    let scale = |level: usize| (h >> level, w >> level);

    let mut c_in = IMAGE_CHANNELS;
    for (i, &c) in ch.iter().enumerate() {
        let hw = scale(i);
        let n = c as u64 * area(hw);
        let p = format!("enc{}", i + 1);
        k.conv_at("encoder", format!("{p}.conv1"), c_in, c, (3, 3), hw);
        k.bn("encoder", c, n);
        k.conv_at("encoder", format!("{p}.conv2"), c, c, (3, 3), hw);
        k.bn("encoder", c, n);
        k.ops("encoder", 2 * n + n); // two ReLUs, then the pool reads every element
        c_in = c;
    }

    // bottleneck block
    let c5 = ch[STAGES - 1];
    let g = c5 / GROUPS;
    let b = scale(STAGES);
    let gb = g as u64 * area(b);
    let head_c = cfg.dscrim_head_channels();
    let full = area((h, w));
    let hidden = cfg.cam_hidden(g);
    k.conv_at("dscrim", "dscrim.pre.conv1x1".into(), c5, head_c, (1, 1), b);
    k.ops("dscrim", upsample_flops(cfg.upsample_mode, head_c as u64 * full));
    k.conv_at("dscrim", "dscrim.out.conv1x1".into(), head_c, 8, (1, 1), (h, w));
    k.ops("dscrim", 8 * full); // global pool
    k.conv_at("dscrim", "dscrim.padd.conv1x1".into(), 8, c5, (1, 1), (1, 1));
    k.ops("dscrim", 4 * c5 as u64);
    for i in 1..=GROUPS {
        let p = format!("dscrim.group{i}");
        // spatial attention
        k.ops("dscrim", 2 * gb);
        k.conv_at(
            "dscrim",
            format!("{p}.sam.conv"),
            2,
            1,
            (cfg.sam_kernel, cfg.sam_kernel),
            b,
        );
        k.ops("dscrim", 4 * area(b) + gb);
        // channel attention
        k.ops("dscrim", gb);
        k.conv_at("dscrim", format!("{p}.cam.fc1"), g, hidden, (1, 1), (1, 1));
        k.ops("dscrim", hidden as u64);
        k.conv_at("dscrim", format!("{p}.cam.fc2"), hidden, g, (1, 1), (1, 1));
        k.ops("dscrim", 4 * g as u64 + gb);
        // gate, fuse, residual
        k.ops("dscrim", 2 * gb);
        k.conv_at("dscrim", format!("{p}.fuse.conv1x1"), g, g, (1, 1), b);
        k.ops("dscrim", gb);
    }
    k.conv_at("dscrim", "dscrim.post.conv1x1".into(), c5, c5, (1, 1), b);

    for level in (1..=STAGES).rev() {
        let c = ch[level - 1];
        let c_prev = if level == STAGES { c5 } else { ch[level] };
        let hw = scale(level - 1);
        let n = c as u64 * area(hw);
        let p = format!("dec{level}");
        k.conv_at("decoder", format!("{p}.reduce"), c_prev, c, (1, 1), scale(level));
        k.ops("decoder", upsample_flops(cfg.upsample_mode, n));

        let g = c / GROUPS;
        let gn = g as u64 * area(hw);
        let strip = (1, hw.0 + hw.1);
        for i in 1..=GROUPS {
            let q = format!("{p}.msffm.group{i}");
            k.ops("msffm", 2 * gn); // directional pools
            k.conv("msffm", ConvCost::new(format!("{q}.strip"), g, g, (1, 3), strip, true));
            k.ops("msffm", 4 * g as u64 * area(strip) + 2 * gn);
            k.bn("msffm", g, gn);
            k.conv_at("msffm", format!("{q}.conv3x3"), g, g, (3, 3), hw);
            k.bn("msffm", g, gn);
            // two global pools, two softmaxes, two weighted sums
            k.ops("msffm", 2 * gn + 2 * 4 * g as u64 + 2 * 2 * gn);
            // add, sigmoid, two gate products
            k.ops("msffm", area(hw) + 4 * area(hw) + 2 * gn);
        }
        if level == 1 {
            k.ops("decoder", n); // merge of the two fused streams
        }

        for kernel in MSRCM_KERNELS {
            k.conv_at(
                "msrcm",
                format!("{p}.msrcm.branch{kernel}.conv"),
                c,
                c,
                (kernel, kernel),
                hw,
            );
            k.bn("msrcm", c, n);
        }
        // branch sum, ReLU, residual
        k.ops("msrcm", (MSRCM_KERNELS.len() as u64 - 1) * n + n + n);
        k.conv_at("msrcm", format!("{p}.msrcm.out.conv"), c, c, (1, 1), hw);
        k.bn("msrcm", c, n);
        k.ops("msrcm", n);
    }

    let c1 = ch[0];
    let g = c1 / GROUPS;
    let n = c1 as u64 * full;
    let mut shared = ConvCost::new("head.shared", g, g, (3, 3), (h, w), true);
    shared.applications = GROUPS as u64;
    shared.flops *= GROUPS as u64;
    k.conv("head", shared);
    k.bn("head", c1, n);
    k.ops("head", n);
    k.conv_at("head", "head.out".into(), c1, OUTPUT_CHANNELS, (1, 1), (h, w));
    k.ops("head", 2 * 4 * OUTPUT_CHANNELS as u64 * full); // sigmoid on both outputs

    let total_params = k.modules.iter().map(|m| m.params).sum();
    let total_flops = k.modules.iter().map(|m| m.flops).sum();
    Ok(CostReport {
        total_params,
        total_flops,
        modules: k.modules,
        convs: k.convs,
    })
}
