let p = [3]; print(p.length);
