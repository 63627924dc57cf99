let s = 'ab';
