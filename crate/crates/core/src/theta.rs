pub struct ConjugacyTriple<T: crate::real::Real>(pub std::marker::PhantomData<T>);
