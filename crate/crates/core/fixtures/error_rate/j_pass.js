let x = parseInt('12') + max(1, 2);
