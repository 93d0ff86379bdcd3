use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

/// Dense vector with the handful of operations the model needs.
///
/// Kept deliberately small: everything is a plain `Vec` under the hood and
/// hot paths go through slices.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Vector { data }
    }

    /// Concatenates the given vectors into one (used to build encoder inputs).
    pub fn concat(parts: &[&Vector<T>]) -> Self {
        let len = parts.iter().map(|p| p.len()).sum();
        let mut data = Vec::with_capacity(len);
        for part in parts {
            data.extend_from_slice(part.as_slice());
        }
        Vector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector<T>) -> T {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a * b)
            .sum()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Vector<T>) {
        assert_eq!(self.len(), other.len(), "axpy: length mismatch");
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + alpha * b;
        }
    }

    pub fn add_assign(&mut self, other: &Vector<T>) {
        self.axpy(T::one(), other);
    }

    pub fn sub_assign(&mut self, other: &Vector<T>) {
        self.axpy(-T::one(), other);
    }

    pub fn scale(&mut self, alpha: T) {
        for a in self.data.iter_mut() {
            *a = *a * alpha;
        }
    }

    pub fn scaled(&self, alpha: T) -> Vector<T> {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn add(&self, other: &Vector<T>) -> Vector<T> {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &Vector<T>) -> Vector<T> {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    /// Euclidean norm.
    pub fn norm2(&self) -> T {
        self.data
            .iter()
            .map(|&a| a * a)
            .sum::<T>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for Vector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}
