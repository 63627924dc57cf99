let v = null; v[0];
