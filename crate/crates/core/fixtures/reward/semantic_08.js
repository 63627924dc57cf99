let u = undefined; u.length;
