let t = !false;
