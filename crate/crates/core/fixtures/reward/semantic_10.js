let s = 'x'; s.push(1);
