let a = [1, 2]; a.push(3); print(a.join(','));
