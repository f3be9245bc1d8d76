use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Name and shape of one parameter tensor; tensors are laid out back to back
/// in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Uniform in ±√(1/fan_in).
    Uniform {
        fan_in: usize,
    },
    Constant(f64),
}

/// Allocates named tensors in a flat buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamBuilder {
    entries: Vec<ParamEntry>,
    inits: Vec<Init>,
    len: usize,
}

impl ParamBuilder {
    fn push(&mut self, name: &str, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.len;
        let entry = ParamEntry {
            name: name.to_string(),
            shape,
        };
        self.len += entry.len();
        self.entries.push(entry);
        self.inits.push(init);
        offset
    }

    pub fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> usize {
        self.push(name, vec![fan_in, fan_out], Init::Uniform { fan_in })
    }

    pub fn bias(&mut self, name: &str, width: usize) -> usize {
        self.push(name, vec![width], Init::Constant(0.0))
    }

    pub fn constant(&mut self, name: &str, width: usize, value: f64) -> usize {
        self.push(name, vec![width], Init::Constant(value))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// Values with weights at zero and constants at their initial value.
    pub fn initial_values(&self) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.len);
        for (entry, init) in self.entries.iter().zip(&self.inits) {
            let fill = match init {
                Init::Uniform { .. } => 0.0,
                Init::Constant(c) => *c,
            };
            values.extend(std::iter::repeat_n(fill, entry.len()));
        }
        values
    }

    /// Seeded initialization: weights uniform in ±√(1/fan_in), biases zero,
    /// layer-norm gains one.
    pub fn random_values(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.len);
        for (entry, init) in self.entries.iter().zip(&self.inits) {
            match *init {
                Init::Uniform { fan_in } => {
                    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
                    values.extend((0..entry.len()).map(|_| rng.random_range(-bound..=bound)));
                }
                Init::Constant(c) => values.extend(std::iter::repeat_n(c, entry.len())),
            }
        }
        values
    }
}
