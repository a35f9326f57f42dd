pub struct DefectReport<T: crate::real::Real>(pub std::marker::PhantomData<T>);
