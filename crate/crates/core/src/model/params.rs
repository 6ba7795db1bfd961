use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, ModelConfig, ModelError};
use crate::tensor::Tensor;

pub const WEIGHT_BOUND: f64 = 0.08;
pub const PROTOTYPE_BOUND: f64 = 0.2;
pub const FORGET_BIAS: f64 = 1.0;

/// Positions of one recurrent direction's tensors in [`ModelParams`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct DirectionIdx {
    pub w: usize,
    pub u: usize,
    pub b: usize,
}

/// Per coupled layer; index 0 is the aspect attention, 1 the opinion one.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerIdx {
    pub g: [usize; 2],
    pub d: [usize; 2],
    pub v: [usize; 2],
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub directions: Vec<DirectionIdx>,
    pub layers: Vec<LayerIdx>,
    pub prototypes: Option<[usize; 2]>,
    pub out_w: usize,
    pub out_b: usize,
}

/// All learnable tensors in a fixed order, with their shapes implied by the config.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

struct Builder {
    shapes: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.shapes.len() - 1
    }
}

/// Names, shapes and layout for a (validated) config.
pub(crate) fn plan(config: &ModelConfig) -> (Vec<String>, Vec<Vec<usize>>, Layout) {
    let mut b = Builder {
        shapes: Vec::new(),
        names: Vec::new(),
    };
    let h = config.hidden_units;
    let gates = config.rnn.gates();
    let dir_names: &[&str] = if config.rnn.bidirectional() { &["fwd", "bwd"] } else { &["fwd"] };
    let directions = dir_names
        .iter()
        .map(|dn| DirectionIdx {
            w: b.add(format!("encoder.{dn}.w"), vec![config.input_dim, gates * h]),
            u: b.add(format!("encoder.{dn}.u"), vec![h, gates * h]),
            b: b.add(format!("encoder.{dn}.b"), vec![gates * h]),
        })
        .collect();
    let d = config.state_dim();
    let k = config.tensor_dim;
    let (layers, prototypes, head_in) = match config.architecture {
        Architecture::Cmla => {
            let layers = (0..config.attention_layers)
                .map(|l| {
                    let mut idx = LayerIdx {
                        g: [0; 2],
                        d: [0; 2],
                        v: [0; 2],
                    };
                    for (m, task) in ["aspect", "opinion"].iter().enumerate() {
                        idx.g[m] = b.add(format!("layer{l}.{task}.g"), vec![k, d, d]);
                        idx.d[m] = b.add(format!("layer{l}.{task}.d"), vec![k, d, d]);
                        idx.v[m] = b.add(format!("layer{l}.{task}.v"), vec![2 * k]);
                    }
                    idx
                })
                .collect();
            let protos = [
                b.add("prototype.aspect".into(), vec![d]),
                b.add("prototype.opinion".into(), vec![d]),
            ];
            (layers, Some(protos), 4 * k)
        }
        Architecture::Softmax => (Vec::new(), None, d),
    };
    let out_w = b.add("output.w".into(), vec![head_in, crate::text::Label::COUNT]);
    let out_b = b.add("output.b".into(), vec![crate::text::Label::COUNT]);
    let layout = Layout {
        directions,
        layers,
        prototypes,
        out_w,
        out_b,
    };
    (b.names, b.shapes, layout)
}

impl ModelParams {
    /// Weights Uniform(±0.08), prototypes Uniform(±0.2), biases zero except
    /// LSTM forget gates at 1.0; drawn in layout order from the config seed.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (names, shapes, layout) = plan(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut tensors: Vec<Tensor> = names
            .iter()
            .zip(&shapes)
            .map(|(name, shape)| {
                if name.ends_with(".b") {
                    Tensor::zeros(shape)
                } else if name.starts_with("prototype.") {
                    Tensor::uniform(shape, PROTOTYPE_BOUND, &mut rng)
                } else {
                    Tensor::uniform(shape, WEIGHT_BOUND, &mut rng)
                }
            })
            .collect();
        if config.rnn.is_lstm() {
            let h = config.hidden_units;
            for dir in &layout.directions {
                // gate order i, f, g, o
                tensors[dir.b].data_mut()[h..2 * h].fill(FORGET_BIAS);
            }
        }
        Ok(ModelParams { tensors, names })
    }

    /// Adopts externally supplied tensors after checking them against the config.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let (names, shapes, _) = plan(config);
        if tensors.len() != shapes.len() {
            return Err(ModelError::Shape(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, s), n) in tensors.iter().zip(&shapes).zip(&names) {
            if t.shape() != s.as_slice() {
                return Err(ModelError::Shape(format!("{n}: expected {s:?}, found {:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(ModelError::Shape(format!("{n}: non-finite values")));
            }
        }
        Ok(ModelParams { tensors, names })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}
