//! Differentiable signal algebra for coefficient functions.
//!
//! Signals are expression trees over `z`, `t`, arithmetic, trigonometric
//! nodes and the normalized Gevrey bump `θ_ω` / smooth step `Θ_ω`. Values
//! and derivatives of any order are produced by truncated-Taylor (jet)
//! arithmetic, which stays exact (to roundoff) where finite differences of
//! the bump would be hopeless.
//!
//! The config grammar accepts e.g. `0.5*sin(2*pi*(1.11*z+4*t))-28`,
//! `step(1.3, t) + 2`, `bump(1.2, t) + sin(z) - 30`.

use crate::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Hard cap on derivative orders served by the jet machinery.
pub const MAX_DERIVATIVE_ORDER: usize = 20;

/// Differentiation variable for [`Expr::jet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Time,
    Space,
}

// ---------------------------------------------------------------------------
// Jet arithmetic: truncated Taylor coefficients c_k = f^{(k)}/k!.
// ---------------------------------------------------------------------------

fn jet_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..n - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn jet_div(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut s = a[k];
        for j in 1..=k {
            s -= b[j] * out[k - j];
        }
        out[k] = s / b[0];
    }
    out
}

fn jet_exp(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut e = vec![0.0; n];
    e[0] = u[0].exp();
    for k in 1..n {
        let mut s = 0.0;
        for j in 1..=k {
            s += j as f64 * u[j] * e[k - j];
        }
        e[k] = s / k as f64;
    }
    e
}

fn jet_sin_cos(u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = u.len();
    let mut s = vec![0.0; n];
    let mut c = vec![0.0; n];
    s[0] = u[0].sin();
    c[0] = u[0].cos();
    for k in 1..n {
        let mut ds = 0.0;
        let mut dc = 0.0;
        for j in 1..=k {
            ds += j as f64 * u[j] * c[k - j];
            dc += j as f64 * u[j] * s[k - j];
        }
        s[k] = ds / k as f64;
        c[k] = -dc / k as f64;
    }
    (s, c)
}

/// `u^a` for real `a`; requires `u[0] > 0`.
fn jet_powf(u: &[f64], a: f64) -> Vec<f64> {
    let n = u.len();
    let mut w = vec![0.0; n];
    w[0] = u[0].powf(a);
    for k in 1..n {
        let mut s = 0.0;
        for i in 1..=k {
            s += (i as f64 * (a + 1.0) - k as f64) * u[i] * w[k - i];
        }
        w[k] = s / (k as f64 * u[0]);
    }
    w
}

fn jet_powi(u: &[f64], mut e: i32) -> Vec<f64> {
    let n = u.len();
    let mut recip = false;
    if e < 0 {
        recip = true;
        e = -e;
    }
    let mut acc = vec![0.0; n];
    acc[0] = 1.0;
    let mut base = u.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            acc = jet_mul(&acc, &base);
        }
        e >>= 1;
        if e > 0 {
            base = jet_mul(&base, &base);
        }
    }
    if recip {
        let mut one = vec![0.0; n];
        one[0] = 1.0;
        acc = jet_div(&one, &acc);
    }
    acc
}

// ---------------------------------------------------------------------------
// Bump and step primitives.
// ---------------------------------------------------------------------------

/// Normalized bump `θ_ω(x) = e^{-((1-x)x)^{-ω}} / e^{-4^ω}` on `(0, 1)`,
/// identically zero outside; `θ_ω(1/2) = 1`.
#[derive(Debug, Clone)]
pub struct BumpFn {
    pub omega: f64,
    four_pow: f64,
}

impl BumpFn {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::Signal(format!("bump order must be positive, got {omega}")));
        }
        Ok(BumpFn {
            omega,
            four_pow: 4.0_f64.powf(omega),
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        let w = x * (1.0 - x);
        if w <= 0.0 {
            return 0.0;
        }
        let s = w.powf(-self.omega);
        if s - self.four_pow > 700.0 {
            return 0.0;
        }
        (self.four_pow - s).exp()
    }

    /// Jet of `θ_ω(g)` given the jet of the argument.
    fn jet_of(&self, g: &[f64]) -> Vec<f64> {
        let n = g.len();
        let x0 = g[0];
        let w0 = x0 * (1.0 - x0);
        let flat = w0 <= 0.0 || w0.powf(-self.omega) - self.four_pow > 700.0;
        if flat {
            return vec![0.0; n];
        }
        // w = g - g², s = w^{-ω}, θ = exp(4^ω − s)
        let w = {
            let g2 = jet_mul(g, g);
            let mut w = g.to_vec();
            for k in 0..n {
                w[k] -= g2[k];
            }
            w
        };
        let s = jet_powf(&w, -self.omega);
        let mut arg = vec![0.0; n];
        for k in 0..n {
            arg[k] = -s[k];
        }
        arg[0] += self.four_pow;
        jet_exp(&arg)
    }
}

const STEP_TABLE_CELLS: usize = 4096;

// Gauss–Legendre 5-point rule on [-1, 1].
const GL5_X: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL5_W: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

#[derive(Debug)]
struct StepTable {
    /// Unnormalized cumulative integral of the bump at the cell nodes.
    cum: Vec<f64>,
    /// Bump values at the cell nodes.
    theta: Vec<f64>,
    /// Total integral `∫₀¹ θ_ω`.
    norm: f64,
}

/// Smooth step `Θ_ω(x) = ∫₀ˣ θ_ω / ∫₀¹ θ_ω`, clamped to 0 below 0 and 1
/// above 1; a Gevrey function of order `1 + 1/ω`.
#[derive(Debug, Clone)]
pub struct StepFn {
    pub omega: f64,
    bump: BumpFn,
    table: Arc<StepTable>,
}

impl StepFn {
    pub fn new(omega: f64) -> Result<Self> {
        let bump = BumpFn::new(omega)?;
        let n = STEP_TABLE_CELLS;
        let h = 1.0 / n as f64;
        let mut cum = vec![0.0; n + 1];
        let mut theta = vec![0.0; n + 1];
        theta[0] = bump.value(0.0);
        for i in 0..n {
            let a = i as f64 * h;
            let mut cell = 0.0;
            for (x, w) in GL5_X.iter().zip(GL5_W.iter()) {
                cell += w * bump.value(a + 0.5 * h * (x + 1.0));
            }
            cum[i + 1] = cum[i] + 0.5 * h * cell;
            theta[i + 1] = bump.value(a + h);
        }
        let norm = cum[n];
        Ok(StepFn {
            omega,
            bump,
            table: Arc::new(StepTable { cum, theta, norm }),
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let t = &self.table;
        let n = STEP_TABLE_CELLS;
        let h = 1.0 / n as f64;
        let i = ((x * n as f64) as usize).min(n - 1);
        let s = (x - i as f64 * h) / h;
        let (y0, y1) = (t.cum[i], t.cum[i + 1]);
        let (m0, m1) = (t.theta[i], t.theta[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * m1;
        v / t.norm
    }

    /// Jet of `Θ_ω(g)` given the jet of the argument.
    fn jet_of(&self, g: &[f64]) -> Vec<f64> {
        let n = g.len();
        let mut out = vec![0.0; n];
        out[0] = self.value(g[0]);
        if n == 1 {
            return out;
        }
        // Θ' = θ/norm, so (Θ∘g)' = θ(g)·g'/norm; integrate that jet.
        let theta = self.bump.jet_of(&g[..n - 1]);
        let mut gp = vec![0.0; n - 1];
        for k in 0..n - 1 {
            gp[k] = (k + 1) as f64 * g[k + 1];
        }
        let p = jet_mul(&theta, &gp);
        for k in 1..n {
            out[k] = p[k - 1] / (k as f64 * self.table.norm);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Expression tree.
// ---------------------------------------------------------------------------

/// Expression over space `z`, time `t` and the signal primitives.
#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Time,
    Space,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Bump(BumpFn, Box<Expr>),
    Step(StepFn, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn uses_space(&self) -> bool {
        match self {
            Expr::Space => true,
            Expr::Const(_) | Expr::Time => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_space() || b.uses_space()
            }
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Bump(_, a)
            | Expr::Step(_, a) => a.uses_space(),
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Const(_) | Expr::Space => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_time() || b.uses_time()
            }
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Bump(_, a)
            | Expr::Step(_, a) => a.uses_time(),
        }
    }

    fn as_const(&self) -> Option<f64> {
        if self.uses_time() || self.uses_space() {
            None
        } else {
            Some(self.eval(0.0, 0.0))
        }
    }

    /// Point evaluation.
    pub fn eval(&self, z: f64, t: f64) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Time => t,
            Expr::Space => z,
            Expr::Add(a, b) => a.eval(z, t) + b.eval(z, t),
            Expr::Sub(a, b) => a.eval(z, t) - b.eval(z, t),
            Expr::Mul(a, b) => a.eval(z, t) * b.eval(z, t),
            Expr::Div(a, b) => a.eval(z, t) / b.eval(z, t),
            Expr::Neg(a) => -a.eval(z, t),
            Expr::Pow(a, e) => a.eval(z, t).powi(*e),
            Expr::Sin(a) => a.eval(z, t).sin(),
            Expr::Cos(a) => a.eval(z, t).cos(),
            Expr::Exp(a) => a.eval(z, t).exp(),
            Expr::Bump(b, a) => b.value(a.eval(z, t)),
            Expr::Step(s, a) => s.value(a.eval(z, t)),
        }
    }

    fn jet_rec(&self, var: Var, z: f64, t: f64, n: usize) -> Vec<f64> {
        match self {
            Expr::Const(v) => {
                let mut j = vec![0.0; n];
                j[0] = *v;
                j
            }
            Expr::Time => {
                let mut j = vec![0.0; n];
                j[0] = t;
                if var == Var::Time && n > 1 {
                    j[1] = 1.0;
                }
                j
            }
            Expr::Space => {
                let mut j = vec![0.0; n];
                j[0] = z;
                if var == Var::Space && n > 1 {
                    j[1] = 1.0;
                }
                j
            }
            Expr::Add(a, b) => {
                let mut ja = a.jet_rec(var, z, t, n);
                let jb = b.jet_rec(var, z, t, n);
                for k in 0..n {
                    ja[k] += jb[k];
                }
                ja
            }
            Expr::Sub(a, b) => {
                let mut ja = a.jet_rec(var, z, t, n);
                let jb = b.jet_rec(var, z, t, n);
                for k in 0..n {
                    ja[k] -= jb[k];
                }
                ja
            }
            Expr::Mul(a, b) => jet_mul(&a.jet_rec(var, z, t, n), &b.jet_rec(var, z, t, n)),
            Expr::Div(a, b) => jet_div(&a.jet_rec(var, z, t, n), &b.jet_rec(var, z, t, n)),
            Expr::Neg(a) => {
                let mut j = a.jet_rec(var, z, t, n);
                for v in &mut j {
                    *v = -*v;
                }
                j
            }
            Expr::Pow(a, e) => jet_powi(&a.jet_rec(var, z, t, n), *e),
            Expr::Sin(a) => jet_sin_cos(&a.jet_rec(var, z, t, n)).0,
            Expr::Cos(a) => jet_sin_cos(&a.jet_rec(var, z, t, n)).1,
            Expr::Exp(a) => jet_exp(&a.jet_rec(var, z, t, n)),
            Expr::Bump(b, a) => b.jet_of(&a.jet_rec(var, z, t, n)),
            Expr::Step(s, a) => s.jet_of(&a.jet_rec(var, z, t, n)),
        }
    }

    /// Taylor coefficients `f, f', f''/2!, …` up to `order` in the chosen
    /// variable at `(z, t)`.
    pub fn jet(&self, var: Var, z: f64, t: f64, order: usize) -> Result<Vec<f64>> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::Signal(format!(
                "derivative order {order} exceeds cap {MAX_DERIVATIVE_ORDER}"
            )));
        }
        Ok(self.jet_rec(var, z, t, order + 1))
    }

    /// Derivative values `f^{(j)}` for `j = 0..=order`.
    pub fn derivs(&self, var: Var, z: f64, t: f64, order: usize) -> Result<Vec<f64>> {
        let mut jet = self.jet(var, z, t, order)?;
        let mut fact = 1.0;
        for (k, c) in jet.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *c *= fact;
        }
        Ok(jet)
    }

    pub fn deriv(&self, var: Var, z: f64, t: f64, order: usize) -> Result<f64> {
        Ok(self.derivs(var, z, t, order)?[order])
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

// ---------------------------------------------------------------------------
// Typed wrappers.
// ---------------------------------------------------------------------------

/// Signal of time only.
#[derive(Debug, Clone)]
pub struct TimeSignal(Expr);

impl TimeSignal {
    pub fn new(expr: Expr) -> Result<Self> {
        if expr.uses_space() {
            return Err(Error::Signal(
                "time signal must not reference the space variable z".into(),
            ));
        }
        Ok(TimeSignal(expr))
    }

    pub fn parse(src: &str) -> Result<Self> {
        TimeSignal::new(parse_expr(src)?)
    }

    pub fn zero() -> Self {
        TimeSignal(Expr::Const(0.0))
    }

    pub fn constant(v: f64) -> Self {
        TimeSignal(Expr::Const(v))
    }

    pub fn expr(&self) -> &Expr {
        &self.0
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.eval(0.0, t)
    }

    /// `d^j f / dt^j` at `t`.
    pub fn deriv(&self, t: f64, j: usize) -> Result<f64> {
        self.0.deriv(Var::Time, 0.0, t, j)
    }

    /// All derivatives `0..=order`.
    pub fn derivs(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        self.0.derivs(Var::Time, 0.0, t, order)
    }
}

/// Evaluate the `j`-th time derivative of a signal (spec operation).
pub fn eval_signal(f: &TimeSignal, t: f64, j: usize) -> Result<f64> {
    f.deriv(t, j)
}

/// Coefficient of space and time, e.g. a reaction profile `a(z, t)`.
#[derive(Debug, Clone)]
pub struct SpaceTimeCoeff(Expr);

impl SpaceTimeCoeff {
    pub fn new(expr: Expr) -> Self {
        SpaceTimeCoeff(expr)
    }

    pub fn parse(src: &str) -> Result<Self> {
        Ok(SpaceTimeCoeff(parse_expr(src)?))
    }

    pub fn expr(&self) -> &Expr {
        &self.0
    }

    pub fn eval(&self, z: f64, t: f64) -> f64 {
        self.0.eval(z, t)
    }

    /// Time derivatives at fixed `z`.
    pub fn time_derivs(&self, z: f64, t: f64, order: usize) -> Result<Vec<f64>> {
        self.0.derivs(Var::Time, z, t, order)
    }

    pub fn space_derivs(&self, z: f64, t: f64, order: usize) -> Result<Vec<f64>> {
        self.0.derivs(Var::Space, z, t, order)
    }
}

// ---------------------------------------------------------------------------
// Parser for the config expression grammar.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Star => write!(f, "*"),
            Tok::Slash => write!(f, "/"),
            Tok::Caret => write!(f, "^"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::Comma => write!(f, ","),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '/' => {
                toks.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                toks.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = bytes[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Signal(format!("bad number literal `{text}`")))?;
                toks.push(Tok::Num(v));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                toks.push(Tok::Ident(bytes[start..i].iter().collect()));
            }
            _ => return Err(Error::Signal(format!("unexpected character `{c}`"))),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            other => Err(Error::Signal(format!(
                "expected `{tok}`, found {}",
                other.map_or("end of input".into(), |t| format!("`{t}`"))
            ))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            let neg = if matches!(self.peek(), Some(Tok::Minus)) {
                self.pos += 1;
                true
            } else {
                false
            };
            match self.next() {
                Some(Tok::Num(v)) if v.fract() == 0.0 => {
                    let e = v as i32 * if neg { -1 } else { 1 };
                    Ok(Expr::Pow(Box::new(base), e))
                }
                other => Err(Error::Signal(format!(
                    "exponent must be an integer literal, found {}",
                    other.map_or("end of input".into(), |t| format!("`{t}`"))
                ))),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "t" => Ok(Expr::Time),
                "z" => Ok(Expr::Space),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(Box::new(arg)),
                        "cos" => Expr::Cos(Box::new(arg)),
                        _ => Expr::Exp(Box::new(arg)),
                    })
                }
                "bump" | "step" => {
                    self.expect(Tok::LParen)?;
                    let omega_expr = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    let omega = omega_expr.as_const().ok_or_else(|| {
                        Error::Signal(format!("{name} order must be a constant"))
                    })?;
                    if name == "bump" {
                        Ok(Expr::Bump(BumpFn::new(omega)?, Box::new(arg)))
                    } else {
                        Ok(Expr::Step(StepFn::new(omega)?, Box::new(arg)))
                    }
                }
                other => Err(Error::Signal(format!("unknown identifier `{other}`"))),
            },
            other => Err(Error::Signal(format!(
                "unexpected token {}",
                other.map_or("end of input".into(), |t| format!("`{t}`"))
            ))),
        }
    }
}

/// Parse an expression in the documented grammar.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Signal(format!(
            "trailing input after expression in `{src}`"
        )));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn parses_paper_style_expressions() {
        let a1 = parse("0.5*sin(2*pi*(1.11*z+4*t))-28");
        let v = a1.eval(0.3, 0.7);
        let expect =
            0.5 * (2.0 * std::f64::consts::PI * (1.11 * 0.3 + 4.0 * 0.7)).sin() - 28.0;
        assert!((v - expect).abs() < 1e-14);
        let q3 = parse("sin(t^2)");
        assert!((q3.eval(0.0, 1.3) - (1.3_f64 * 1.3).sin()).abs() < 1e-14);
        assert!(parse_expr("sin(q)").is_err());
        assert!(parse_expr("1 +").is_err());
    }

    #[test]
    fn time_signal_rejects_space() {
        assert!(TimeSignal::parse("1 - sin(t)").is_ok());
        assert!(TimeSignal::parse("z + 1").is_err());
    }

    #[test]
    fn sin_derivative_at_zero() {
        // f = sin(3t): f'(0) = 3
        let f = TimeSignal::parse("sin(3*t)").unwrap();
        assert!((eval_signal(&f, 0.0, 1).unwrap() - 3.0).abs() < 1e-14);
        assert!((eval_signal(&f, 0.0, 3).unwrap() + 27.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_order_cap() {
        let f = TimeSignal::parse("sin(t)").unwrap();
        assert!(f.deriv(0.0, MAX_DERIVATIVE_ORDER).is_ok());
        assert!(f.deriv(0.0, MAX_DERIVATIVE_ORDER + 1).is_err());
    }

    #[test]
    fn bump_normalization_and_support() {
        for omega in [1.1, 1.3, 1.6] {
            let b = BumpFn::new(omega).unwrap();
            assert!((b.value(0.5) - 1.0).abs() < 1e-15, "θ_ω(1/2) = 1");
            assert_eq!(b.value(0.0), 0.0);
            assert_eq!(b.value(1.0), 0.0);
            assert_eq!(b.value(-0.2), 0.0);
        }
    }

    #[test]
    fn bump_symmetry() {
        let b = BumpFn::new(1.3).unwrap();
        for i in 1..50 {
            let t = i as f64 / 50.0;
            assert!((b.value(t) - b.value(1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn step_endpoints_and_monotonicity() {
        let s = StepFn::new(1.2).unwrap();
        assert_eq!(s.value(0.0), 0.0);
        assert_eq!(s.value(1.0), 1.0);
        assert_eq!(s.value(2.5), 1.0);
        assert!((s.value(0.5) - 0.5).abs() < 1e-9, "odd symmetry of the bump");
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = s.value(i as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        // first derivative of analytic trees vs centered differences
        let exprs = [
            parse("sin(3*t) * cos(t) + t^2"),
            parse("exp(0.3*t) - 1/(2+t)"),
            parse("step(1.3, t) + 2"),
            parse("bump(1.2, t)"),
        ];
        let h = 1e-5;
        for e in &exprs {
            for i in 0..20 {
                let t = 0.05 + 0.9 * i as f64 / 19.0;
                let fd = (e.eval(0.0, t + h) - e.eval(0.0, t - h)) / (2.0 * h);
                let d = e.deriv(Var::Time, 0.0, t, 1).unwrap();
                assert!(
                    (fd - d).abs() < 1e-6 * (1.0 + d.abs()),
                    "t = {t}: fd {fd} vs jet {d}"
                );
            }
        }
    }

    #[test]
    fn high_order_bump_derivative_is_finite_and_smooth() {
        let e = parse("step(1.3, t)");
        for j in [5, 10, 15] {
            let d = e.deriv(Var::Time, 0.0, 0.37, j).unwrap();
            assert!(d.is_finite());
        }
        // flat outside the support
        for j in 0..=10 {
            assert_eq!(e.deriv(Var::Time, 0.0, -0.5, j).unwrap(), if j == 0 { 0.0 } else { 0.0 });
            assert_eq!(e.deriv(Var::Time, 0.0, 1.5, j).unwrap(), if j == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn space_jets() {
        let e = parse("3 + sin(z)");
        let d = e.derivs(Var::Space, 0.7, 0.0, 2).unwrap();
        assert!((d[0] - (3.0 + 0.7_f64.sin())).abs() < 1e-14);
        assert!((d[1] - 0.7_f64.cos()).abs() < 1e-14);
        assert!((d[2] + 0.7_f64.sin()).abs() < 1e-14);
    }
}
