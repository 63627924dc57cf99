let s = "catsun";
let head = s.slice(0, 2);
let tail = s.slice(2);
print(head + ":" + tail);
