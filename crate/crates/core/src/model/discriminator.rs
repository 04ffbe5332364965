//! Single-layer GRU over content vectors, last hidden state read out through
//! a linear head to one logit: sigmoid gives p(tweet | z).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BoundParams, ContentVectors, ModelError};
use crate::numerics::{Graph, NodeId, Tensor};

pub const DEFAULT_DISC_HIDDEN: usize = 64;

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub input_size: usize,
    pub hidden_size: usize,
    w_xr: Tensor,
    w_hr: Tensor,
    b_r: Tensor,
    w_xu: Tensor,
    w_hu: Tensor,
    b_u: Tensor,
    w_xc: Tensor,
    w_hc: Tensor,
    b_c: Tensor,
    w_out: Tensor,
    b_out: Tensor,
}

impl Discriminator {
    pub fn new(input_size: usize, hidden_size: usize, seed: u64) -> Discriminator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / (hidden_size as f64).sqrt();
        let wx = |rng: &mut ChaCha8Rng| {
            Tensor::randn(vec![input_size, hidden_size], std, rng).with_grad()
        };
        let wh = |rng: &mut ChaCha8Rng| {
            Tensor::randn(vec![hidden_size, hidden_size], std, rng).with_grad()
        };
        let b = || Tensor::zeros(vec![hidden_size]).with_grad();
        Discriminator {
            input_size,
            hidden_size,
            w_xr: wx(&mut rng),
            w_hr: wh(&mut rng),
            b_r: b(),
            w_xu: wx(&mut rng),
            w_hu: wh(&mut rng),
            b_u: b(),
            w_xc: wx(&mut rng),
            w_hc: wh(&mut rng),
            b_c: b(),
            w_out: Tensor::randn(vec![hidden_size, 1], std, &mut rng).with_grad(),
            b_out: Tensor::zeros(vec![1]).with_grad(),
        }
    }

    pub fn for_each_param(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("disc.w_xr", &self.w_xr);
        f("disc.w_hr", &self.w_hr);
        f("disc.b_r", &self.b_r);
        f("disc.w_xu", &self.w_xu);
        f("disc.w_hu", &self.w_hu);
        f("disc.b_u", &self.b_u);
        f("disc.w_xc", &self.w_xc);
        f("disc.w_hc", &self.w_hc);
        f("disc.b_c", &self.b_c);
        f("disc.w_out", &self.w_out);
        f("disc.b_out", &self.b_out);
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("disc.w_xr", &mut self.w_xr);
        f("disc.w_hr", &mut self.w_hr);
        f("disc.b_r", &mut self.b_r);
        f("disc.w_xu", &mut self.w_xu);
        f("disc.w_hu", &mut self.w_hu);
        f("disc.b_u", &mut self.b_u);
        f("disc.w_xc", &mut self.w_xc);
        f("disc.w_hc", &mut self.w_hc);
        f("disc.b_c", &mut self.b_c);
        f("disc.w_out", &mut self.w_out);
        f("disc.b_out", &mut self.b_out);
    }

    /// One logit per batch row. The recurrence only advances over unmasked
    /// positions, so each row's readout is the state at its last real token.
    /// Errors on rows with no unmasked positions.
    pub fn logits(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        z: NodeId,
        key_mask: &[f64],
    ) -> Result<NodeId, ModelError> {
        let shape = g.shape(z).to_vec();
        assert_eq!(
            shape.len(),
            3,
            "discriminator: z must be [batch, seq, d], got {:?}",
            shape
        );
        let (b, s, d) = (shape[0], shape[1], shape[2]);
        assert_eq!(
            d, self.input_size,
            "discriminator: z feature dim {} vs input_size {}",
            d, self.input_size
        );
        assert_eq!(key_mask.len(), b * s, "discriminator: mask length");
        for r in 0..b {
            if (0..s).all(|c| key_mask[r * s + c] == 0.0) {
                return Err(ModelError::EmptySequence { row: r });
            }
        }

        let h_dim = self.hidden_size;
        let mut h = g.constant(vec![b, h_dim], vec![0.0; b * h_dim]);
        for t in 0..s {
            let x_slice = g.narrow(z, 1, t, 1);
            let x = g.reshape(x_slice, vec![b, d]);

            let gate = |g: &mut Graph, x: NodeId, h: NodeId, wx: &str, wh: &str, bias: &str| {
                let a = g.matmul(x, p.id(wx));
                let bq = g.matmul(h, p.id(wh));
                let sum = g.add(a, bq);
                g.add_bias(sum, p.id(bias))
            };

            let r_pre = gate(g, x, h, "disc.w_xr", "disc.w_hr", "disc.b_r");
            let r = g.sigmoid(r_pre);
            let u_pre = gate(g, x, h, "disc.w_xu", "disc.w_hu", "disc.b_u");
            let u = g.sigmoid(u_pre);
            let rh = g.mul(r, h);
            let c_pre = gate(g, x, rh, "disc.w_xc", "disc.w_hc", "disc.b_c");
            let c = g.tanh(c_pre);

            // h_new = (1 - u) * h + u * c
            let neg_u = g.scale(u, -1.0);
            let one_minus_u = g.add_scalar(neg_u, 1.0);
            let keep = g.mul(one_minus_u, h);
            let update = g.mul(u, c);
            let h_new = g.add(keep, update);

            // Hold the previous state on padded steps.
            let m_t: Vec<f64> = (0..b).map(|r| key_mask[r * s + t]).collect();
            if m_t.iter().all(|&m| m == 1.0) {
                h = h_new;
            } else {
                let m_node = g.constant(vec![b], m_t.clone());
                let inv: Vec<f64> = m_t.iter().map(|m| 1.0 - m).collect();
                let inv_node = g.constant(vec![b], inv);
                let fresh = g.mul_rows(h_new, m_node);
                let held = g.mul_rows(h, inv_node);
                h = g.add(fresh, held);
            }
        }
        let logit = g.matmul(h, p.id("disc.w_out"));
        let logit = g.add_bias(logit, p.id("disc.b_out"));
        Ok(g.reshape(logit, vec![b]))
    }

    /// p(tweet | z) per row, computed on a throwaway tape.
    pub fn probabilities(&self, z: &ContentVectors) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let p = BoundParams::bind_discriminator(&mut g, self, false);
        let zc = g.constant(vec![z.rows, z.seq, z.d_model], z.data.clone());
        let logit = self.logits(&mut g, &p, zc, &z.mask)?;
        let prob = g.sigmoid(logit);
        Ok(g.data(prob).to_vec())
    }
}
