'ab'.repeat(-1);
