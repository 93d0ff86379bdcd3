use rand::Rng;

use crate::encoders::{EncoderKind, EncoderTape, LstmTape};
use crate::error::{Error, Result};
use crate::numerics::{
    dsigmoid_from_output, dtanh_from_output, sigmoid, uniform_symmetric, Matrix, Vector,
};
use crate::scalar::Scalar;

/// One gate block `W x_t + U h_{t-1} + b` of the LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmGate<T> {
    pub w: Matrix<T>,
    pub u: Matrix<T>,
    pub b: Vector<T>,
}

impl<T: Scalar> LstmGate<T> {
    pub fn zeros(k: usize, input_dim: usize) -> Self {
        LstmGate {
            w: Matrix::zeros(k, input_dim),
            u: Matrix::zeros(k, k),
            b: Vector::zeros(k),
        }
    }

    pub fn random(k: usize, input_dim: usize, width: f64, rng: &mut impl Rng) -> Self {
        let mut g = LstmGate::zeros(k, input_dim);
        for x in g.w.as_mut_slice() {
            *x = uniform_symmetric(rng, width);
        }
        for x in g.u.as_mut_slice() {
            *x = uniform_symmetric(rng, width);
        }
        for x in g.b.as_mut_slice() {
            *x = uniform_symmetric(rng, width);
        }
        g
    }

    fn pre_activation(&self, x: &Vector<T>, h_prev: &Vector<T>) -> Vector<T> {
        let mut a = self.w.matvec(x);
        a.add_assign(&self.u.matvec(h_prev));
        a.add_assign(&self.b);
        a
    }

    pub fn axpy(&mut self, alpha: T, other: &LstmGate<T>) {
        self.w.axpy(alpha, &other.w);
        self.u.axpy(alpha, &other.u);
        self.b.axpy(alpha, &other.b);
    }

    pub fn scale(&mut self, alpha: T) {
        for x in self.w.as_mut_slice() {
            *x = *x * alpha;
        }
        for x in self.u.as_mut_slice() {
            *x = *x * alpha;
        }
        for x in self.b.as_mut_slice() {
            *x = *x * alpha;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.w.all_finite() && self.u.all_finite() && self.b.all_finite()
    }

    pub fn coord_count(&self) -> usize {
        self.w.rows() * self.w.cols() + self.u.rows() * self.u.cols() + self.b.len()
    }
}

/// LSTM parameters: input (`i`), forget (`f`), output (`o`) and update (`u`)
/// gate blocks, all of identical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    pub input: LstmGate<T>,
    pub forget: LstmGate<T>,
    pub output: LstmGate<T>,
    pub update: LstmGate<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(k: usize, input_dim: usize) -> Self {
        LstmParams {
            input: LstmGate::zeros(k, input_dim),
            forget: LstmGate::zeros(k, input_dim),
            output: LstmGate::zeros(k, input_dim),
            update: LstmGate::zeros(k, input_dim),
        }
    }

    /// Gate draw order is input, forget, output, update (W, U, b within each).
    pub fn random(k: usize, input_dim: usize, width: f64, rng: &mut impl Rng) -> Self {
        LstmParams {
            input: LstmGate::random(k, input_dim, width, rng),
            forget: LstmGate::random(k, input_dim, width, rng),
            output: LstmGate::random(k, input_dim, width, rng),
            update: LstmGate::random(k, input_dim, width, rng),
        }
    }

    pub fn gates(&self) -> [(&'static str, &LstmGate<T>); 4] {
        [
            ("input", &self.input),
            ("forget", &self.forget),
            ("output", &self.output),
            ("update", &self.update),
        ]
    }

    pub fn hidden_dim(&self) -> usize {
        self.input.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.w.cols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let k = self.input.w.rows();
        let d = self.input.w.cols();
        for (name, g) in self.gates() {
            if g.w.rows() != k
                || g.w.cols() != d
                || g.u.rows() != k
                || g.u.cols() != k
                || g.b.len() != k
            {
                return Err(Error::Config(format!(
                    "LSTM {name} gate shapes disagree with the input gate"
                )));
            }
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: T, other: &LstmParams<T>) {
        self.input.axpy(alpha, &other.input);
        self.forget.axpy(alpha, &other.forget);
        self.output.axpy(alpha, &other.output);
        self.update.axpy(alpha, &other.update);
    }

    pub fn scale(&mut self, alpha: T) {
        self.input.scale(alpha);
        self.forget.scale(alpha);
        self.output.scale(alpha);
        self.update.scale(alpha);
    }

    pub fn all_finite(&self) -> bool {
        self.gates().iter().all(|(_, g)| g.all_finite())
    }

    pub fn coord_count(&self) -> usize {
        self.gates().iter().map(|(_, g)| g.coord_count()).sum()
    }
}

/// Forward pass `i, f, o = σ(..)`, `u = tanh(..)`, `c_t = i⊙u + f⊙c_{t-1}`,
/// `h_t = o⊙tanh(c_t)`, starting from zero state; the output is `h_n`.
pub(crate) fn lstm_run<T: Scalar>(
    p: &LstmParams<T>,
    xs: &[Vector<T>],
) -> Result<(Vector<T>, EncoderTape<T>)> {
    if xs.is_empty() {
        return Err(Error::Argument("encoder input sequence is empty".into()));
    }
    p.check_shapes()?;
    for x in xs {
        if x.len() != p.input_dim() {
            return Err(Error::Config(format!(
                "encoder input has dimension {}, cell expects {}",
                x.len(),
                p.input_dim()
            )));
        }
    }
    let k = p.hidden_dim();
    let n = xs.len();
    let mut tape = LstmTape {
        input_gate: Vec::with_capacity(n),
        forget_gate: Vec::with_capacity(n),
        output_gate: Vec::with_capacity(n),
        update: Vec::with_capacity(n),
        cell: Vec::with_capacity(n),
    };
    let mut hidden: Vec<Vector<T>> = Vec::with_capacity(n);
    let mut h_prev = Vector::zeros(k);
    let mut c_prev = Vector::zeros(k);
    for x in xs {
        let ai = p.input.pre_activation(x, &h_prev);
        let af = p.forget.pre_activation(x, &h_prev);
        let ao = p.output.pre_activation(x, &h_prev);
        let au = p.update.pre_activation(x, &h_prev);
        let mut i_t = Vector::zeros(k);
        let mut f_t = Vector::zeros(k);
        let mut o_t = Vector::zeros(k);
        let mut u_t = Vector::zeros(k);
        let mut c_t = Vector::zeros(k);
        let mut h_t = Vector::zeros(k);
        for j in 0..k {
            i_t[j] = sigmoid(ai[j]);
            f_t[j] = sigmoid(af[j]);
            o_t[j] = sigmoid(ao[j]);
            u_t[j] = au[j].tanh();
            c_t[j] = i_t[j] * u_t[j] + f_t[j] * c_prev[j];
            h_t[j] = o_t[j] * c_t[j].tanh();
        }
        tape.input_gate.push(i_t);
        tape.forget_gate.push(f_t);
        tape.output_gate.push(o_t);
        tape.update.push(u_t);
        tape.cell.push(c_t.clone());
        hidden.push(h_t.clone());
        h_prev = h_t;
        c_prev = c_t;
    }
    let output = hidden[n - 1].clone();
    Ok((
        output,
        EncoderTape {
            kind: EncoderKind::Lstm,
            xs: xs.to_vec(),
            hidden,
            lstm: Some(tape),
            token_ids: Vec::new(),
            position_ids: Vec::new(),
            word_dim: 0,
        },
    ))
}

/// Reverse-mode pass through the LSTM recurrence.
pub(crate) fn lstm_backward<T: Scalar>(
    p: &LstmParams<T>,
    tape: &EncoderTape<T>,
    upstream: &Vector<T>,
) -> (LstmParams<T>, Vec<Vector<T>>) {
    let states = tape.lstm.as_ref().expect("LSTM tape carries gate states");
    let n = tape.xs.len();
    let k = p.hidden_dim();
    let mut grads = LstmParams::zeros(k, p.input_dim());
    let mut dx: Vec<Vector<T>> = vec![Vector::zeros(p.input_dim()); n];

    let mut dh = upstream.clone();
    let mut dc: Vector<T> = Vector::zeros(k);
    for t in (0..n).rev() {
        let i_t = &states.input_gate[t];
        let f_t = &states.forget_gate[t];
        let o_t = &states.output_gate[t];
        let u_t = &states.update[t];
        let c_t = &states.cell[t];

        let mut da_i = Vector::zeros(k);
        let mut da_f = Vector::zeros(k);
        let mut da_o = Vector::zeros(k);
        let mut da_u = Vector::zeros(k);
        for j in 0..k {
            let tc = c_t[j].tanh();
            // h_t = o ⊙ tanh(c)
            da_o[j] = dh[j] * tc * dsigmoid_from_output(o_t[j]);
            dc[j] = dc[j] + dh[j] * o_t[j] * dtanh_from_output(tc);
            // c_t = i ⊙ u + f ⊙ c_{t-1}
            da_i[j] = dc[j] * u_t[j] * dsigmoid_from_output(i_t[j]);
            da_u[j] = dc[j] * i_t[j] * dtanh_from_output(u_t[j]);
            let c_prev = if t > 0 { states.cell[t - 1][j] } else { T::zero() };
            da_f[j] = dc[j] * c_prev * dsigmoid_from_output(f_t[j]);
        }

        let x = &tape.xs[t];
        let h_prev = if t > 0 {
            Some(&tape.hidden[t - 1])
        } else {
            None
        };
        let mut dh_prev = Vector::zeros(k);
        let mut dxt = Vector::zeros(p.input_dim());
        for (da, gate, grad) in [
            (&da_i, &p.input, &mut grads.input),
            (&da_f, &p.forget, &mut grads.forget),
            (&da_o, &p.output, &mut grads.output),
            (&da_u, &p.update, &mut grads.update),
        ] {
            grad.w.add_outer(da, x);
            if let Some(hp) = h_prev {
                grad.u.add_outer(da, hp);
            }
            grad.b.add_assign(da);
            dxt.add_assign(&gate.w.matvec_t(da));
            dh_prev.add_assign(&gate.u.matvec_t(da));
        }
        dx[t] = dxt;
        dh = dh_prev;
        // dc_{t-1} = dc_t ⊙ f_t
        for j in 0..k {
            dc[j] = dc[j] * f_t[j];
        }
    }
    (grads, dx)
}
