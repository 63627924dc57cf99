let n = null;
