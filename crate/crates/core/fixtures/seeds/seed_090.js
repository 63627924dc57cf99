let s = "abqq";
let head = s.slice(0, 1);
let tail = s.slice(1);
print(head + ":" + tail);
