let q = 1; q.pop();
