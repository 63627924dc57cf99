print('a');
