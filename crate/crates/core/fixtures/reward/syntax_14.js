a.b.;
