//! Layer descriptions, output-shape tracing and parameter accounting.

use std::fmt;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    /// alpha = 1
    Elu,
    Softmax,
}

impl Activation {
    /// Byte used for the conv activation in checkpoints.
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Elu => 1,
            Activation::Linear => 2,
            Activation::Softmax => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Elu),
            2 => Some(Activation::Linear),
            3 => Some(Activation::Softmax),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Elu => "elu",
            Activation::Softmax => "softmax",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            "linear" => Ok(Activation::Linear),
            "softmax" => Ok(Activation::Softmax),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer {
    /// Stride 1, same padding.
    Conv1D {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    /// Pool size == stride, valid padding.
    MaxPool1D { pool: usize },
    BatchNorm { momentum: f64, epsilon: f64 },
    Dropout { rate: f64 },
    Lstm { units: usize, return_sequences: bool },
    Dense { units: usize, activation: Activation },
}

impl Layer {
    pub fn batch_norm() -> Self {
        Layer::BatchNorm {
            momentum: 0.99,
            epsilon: 1e-3,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv1D { .. } => "Conv1D",
            Layer::MaxPool1D { .. } => "MaxPooling1D",
            Layer::BatchNorm { .. } => "BatchNormalization",
            Layer::Dropout { .. } => "Dropout",
            Layer::Lstm { .. } => "LSTM",
            Layer::Dense { .. } => "Dense",
        }
    }

    /// Which of the layer's parameter tensors receive gradients.
    pub fn trainable_mask(&self) -> &'static [bool] {
        match self {
            Layer::Conv1D { .. } | Layer::Dense { .. } => &[true, true],
            Layer::Lstm { .. } => &[true, true, true],
            // gamma, beta, moving mean, moving variance
            Layer::BatchNorm { .. } => &[true, true, false, false],
            Layer::MaxPool1D { .. } | Layer::Dropout { .. } => &[],
        }
    }
}

/// Per-example activation shape (batch axis omitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Seq { len: usize, channels: usize },
    Flat(usize),
}

impl FeatureShape {
    pub fn channels(self) -> usize {
        match self {
            FeatureShape::Seq { channels, .. } => channels,
            FeatureShape::Flat(n) => n,
        }
    }

    pub fn size(self) -> usize {
        match self {
            FeatureShape::Seq { len, channels } => len * channels,
            FeatureShape::Flat(n) => n,
        }
    }

    pub fn with_batch(self, batch: usize) -> Vec<usize> {
        match self {
            FeatureShape::Seq { len, channels } => vec![batch, len, channels],
            FeatureShape::Flat(n) => vec![batch, n],
        }
    }
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureShape::Seq { len, channels } => write!(f, "(None, {len}, {channels})"),
            FeatureShape::Flat(n) => write!(f, "(None, {n})"),
        }
    }
}

/// Width and kernel choices for the Conv1D-LSTM family.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_len: usize,
    pub conv_filters: [usize; 3],
    pub conv_kernels: [usize; 3],
    pub lstm_units: [usize; 2],
    pub dense_units: [usize; 3],
    pub classes: usize,
    pub dropout: f64,
    pub conv_activation: Activation,
    pub dense_activation: Activation,
}

impl Architecture {
    /// The full-width network for 2376-long feature vectors and seven
    /// emotion classes.
    pub fn emoaugnet(conv_activation: Activation) -> Self {
        Self {
            input_len: 2376,
            conv_filters: [256, 512, 256],
            conv_kernels: [5, 3, 3],
            lstm_units: [128, 128],
            dense_units: [128, 64, 32],
            classes: 7,
            dropout: 0.2,
            conv_activation,
            dense_activation: Activation::Elu,
        }
    }

    /// Narrow variant used for fast end-to-end training runs.
    pub fn reduced(conv_activation: Activation) -> Self {
        Self {
            conv_filters: [32, 64, 32],
            lstm_units: [32, 32],
            ..Self::emoaugnet(conv_activation)
        }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::emoaugnet(Activation::Relu)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryRow {
    pub layer: &'static str,
    pub output_shape: String,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input: FeatureShape,
    pub layers: Vec<Layer>,
    pub conv_activation: Activation,
}

impl ModelSpec {
    /// Lays out the 23-layer stack. Block 1 pools before normalizing; blocks
    /// 2 and 3 normalize before pooling.
    pub fn from_architecture(arch: &Architecture) -> Result<Self, NnError> {
        let [f1, f2, f3] = arch.conv_filters;
        let [k1, k2, k3] = arch.conv_kernels;
        let [u1, u2] = arch.lstm_units;
        let [d1, d2, d3] = arch.dense_units;
        let act = arch.conv_activation;
        let dense = arch.dense_activation;
        let drop = Layer::Dropout { rate: arch.dropout };
        let pool = Layer::MaxPool1D { pool: 2 };
        let conv = |filters, kernel| Layer::Conv1D {
            filters,
            kernel,
            activation: act,
        };
        let layers = vec![
            conv(f1, k1),
            pool,
            Layer::batch_norm(),
            drop,
            conv(f2, k2),
            Layer::batch_norm(),
            pool,
            drop,
            conv(f3, k3),
            Layer::batch_norm(),
            pool,
            Layer::Lstm {
                units: u1,
                return_sequences: true,
            },
            drop,
            Layer::Lstm {
                units: u2,
                return_sequences: false,
            },
            drop,
            Layer::Dense {
                units: d1,
                activation: dense,
            },
            Layer::batch_norm(),
            Layer::Dense {
                units: d2,
                activation: dense,
            },
            Layer::batch_norm(),
            Layer::Dense {
                units: d3,
                activation: dense,
            },
            Layer::batch_norm(),
            drop,
            Layer::Dense {
                units: arch.classes,
                activation: Activation::Softmax,
            },
        ];
        Self::new(
            FeatureShape::Seq {
                len: arch.input_len,
                channels: 1,
            },
            layers,
            act,
        )
    }

    pub fn new(input: FeatureShape, layers: Vec<Layer>, conv_activation: Activation) -> Result<Self, NnError> {
        let spec = Self {
            input,
            layers,
            conv_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), NnError> {
        let last = self.layers.len().checked_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let softmax = matches!(
                layer,
                Layer::Dense {
                    activation: Activation::Softmax,
                    ..
                }
            );
            if softmax != (Some(i) == last) {
                return Err(NnError::InvalidModel(
                    "the last layer, and only it, must be a softmax Dense layer".into(),
                ));
            }
            match *layer {
                Layer::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                    return Err(NnError::InvalidModel(format!("dropout rate {rate} not in [0, 1)")));
                }
                Layer::Conv1D {
                    activation: Activation::Softmax,
                    ..
                } => {
                    return Err(NnError::InvalidModel("softmax conv activation".into()));
                }
                Layer::MaxPool1D { pool: 0 } => {
                    return Err(NnError::InvalidModel("pool size must be positive".into()));
                }
                _ => {}
            }
        }
        self.output_shapes().map(|_| ())
    }

    pub fn output_classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense { units, .. }) => *units,
            _ => 0,
        }
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn shape_trace(&self) -> Result<Vec<FeatureShape>, NnError> {
        let mut shapes = vec![self.input];
        let mut cur = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |what: &str| NnError::ShapeMismatch(format!("layer {i} ({}): {what}", layer.kind_name()));
            cur = match (*layer, cur) {
                (Layer::Conv1D { filters, kernel, .. }, FeatureShape::Seq { len, .. }) => {
                    if kernel == 0 || filters == 0 {
                        return Err(bad("empty kernel"));
                    }
                    FeatureShape::Seq { len, channels: filters }
                }
                (Layer::MaxPool1D { pool }, FeatureShape::Seq { len, channels }) => {
                    if len < pool {
                        return Err(bad("sequence shorter than pool"));
                    }
                    FeatureShape::Seq { len: len / pool, channels }
                }
                (Layer::Lstm { units, return_sequences }, FeatureShape::Seq { len, .. }) => {
                    if return_sequences {
                        FeatureShape::Seq { len, channels: units }
                    } else {
                        FeatureShape::Flat(units)
                    }
                }
                (Layer::Dense { units, .. }, FeatureShape::Flat(_)) => FeatureShape::Flat(units),
                (Layer::BatchNorm { .. } | Layer::Dropout { .. }, s) => s,
                _ => return Err(bad("unsupported input rank")),
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Output shape of every layer.
    pub fn output_shapes(&self) -> Result<Vec<FeatureShape>, NnError> {
        Ok(self.shape_trace()?.into_iter().skip(1).collect())
    }

    /// Shapes of each layer's parameter tensors, in storage order.
    pub fn param_shapes(&self) -> Result<Vec<Vec<Vec<usize>>>, NnError> {
        let trace = self.shape_trace()?;
        Ok(self
            .layers
            .iter()
            .zip(&trace)
            .map(|(layer, input)| {
                let cin = input.channels();
                match *layer {
                    Layer::Conv1D { filters, kernel, .. } => vec![vec![kernel, cin, filters], vec![filters]],
                    Layer::BatchNorm { .. } => vec![vec![cin]; 4],
                    Layer::Lstm { units, .. } => {
                        vec![vec![cin, 4 * units], vec![units, 4 * units], vec![4 * units]]
                    }
                    Layer::Dense { units, .. } => vec![vec![cin, units], vec![units]],
                    Layer::MaxPool1D { .. } | Layer::Dropout { .. } => vec![],
                }
            })
            .collect())
    }

    /// Closed-form parameter counts: conv `in*k*out + out`, batch norm
    /// `4*ch`, LSTM `4*(in*u + u*u + u)`, dense `in*out + out`.
    pub fn param_counts(&self) -> Result<Vec<usize>, NnError> {
        let trace = self.shape_trace()?;
        Ok(self
            .layers
            .iter()
            .zip(&trace)
            .map(|(layer, input)| {
                let cin = input.channels();
                match *layer {
                    Layer::Conv1D { filters, kernel, .. } => cin * kernel * filters + filters,
                    Layer::BatchNorm { .. } => 4 * cin,
                    Layer::Lstm { units, .. } => 4 * (cin * units + units * units + units),
                    Layer::Dense { units, .. } => cin * units + units,
                    Layer::MaxPool1D { .. } | Layer::Dropout { .. } => 0,
                }
            })
            .collect())
    }

    pub fn total_params(&self) -> usize {
        self.param_counts().map(|c| c.iter().sum()).unwrap_or(0)
    }

    pub fn summary(&self) -> Result<Vec<SummaryRow>, NnError> {
        let shapes = self.output_shapes()?;
        let counts = self.param_counts()?;
        Ok(self
            .layers
            .iter()
            .zip(shapes)
            .zip(counts)
            .map(|((layer, shape), params)| SummaryRow {
                layer: layer.kind_name(),
                output_shape: shape.to_string(),
                params,
            })
            .collect())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.summary().map_err(|_| fmt::Error)?;
        writeln!(f, "{:<20} {:<20} {:>10}", "Layer (type)", "Output Shape", "Param #")?;
        for row in &rows {
            writeln!(f, "{:<20} {:<20} {:>10}", row.layer, row.output_shape, row.params)?;
        }
        write!(f, "Total params: {}", self.total_params())
    }
}
